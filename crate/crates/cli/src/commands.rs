use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use concept_debias::data::{load_bundle_dir, save_bundle, split_indices, synth_generate, SynthSpec};
use concept_debias::decomposition::{load_basis, save_basis, truncated_svd_with, SvdMethod, SvdOptions};
use concept_debias::heads::{load_head, save_head, train_head, TrainConfig};
use concept_debias::occlusion::{explain_units, load_occlusion_set, occlusion_importance, render_html, Normalization};
use concept_debias::pipeline::{self, PipelineConfig};
use concept_debias::ranking::{rank_concepts, ranked_table, removal_sweep, SweepConfig};
use concept_debias::sobol::{co_importance, sample_design, select_eval_rows, ImportanceReport};
use concept_debias::text::{neutralize_document, NeutralizeRules};
use concept_debias::{Error, Result};
use serde::Serialize;

use crate::{Cli, Command, Method, Norm, Target, TrainArgs};

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Config from `--config` (or defaults) with `--seed-override` applied.
fn base_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed_override {
        cfg.override_seeds(seed);
    }
    Ok(cfg)
}

fn seed(cli: &Cli, flag: Option<u64>, fallback: u64) -> u64 {
    cli.seed_override.or(flag).unwrap_or(fallback)
}

fn train_config(cli: &Cli, cfg: &PipelineConfig, args: &TrainArgs) -> TrainConfig {
    let mut t = cfg.train.clone();
    if let Some(grid) = &args.lr_grid {
        t.lr_grid = grid.clone();
    }
    if let Some(e) = args.max_epochs {
        t.max_epochs = e;
    }
    if let Some(b) = args.batch_size {
        t.batch_size = b;
    }
    t.seed = seed(cli, args.train_seed, t.seed);
    t
}

fn parse_ks(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidSpec(format!("cannot parse ks `{s}`; use `a..b` or `0,1,2`"));
    if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        return Ok((a..=b).collect());
    }
    s.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect()
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Neutralize {
            input,
            out,
            rules,
            names,
            max_tokens,
            report,
        } => {
            let mut r = match rules {
                Some(p) => NeutralizeRules::load(p)?,
                None => NeutralizeRules::default(),
            };
            if let Some(p) = names {
                r.add_names_file(p)?;
            }
            r.validate()?;
            let file = std::fs::File::open(input).map_err(|e| Error::io(input, e))?;
            let out_file = std::fs::File::create(out).map_err(|e| Error::io(out, e))?;
            let mut w = BufWriter::new(out_file);
            let mut reports = Vec::new();
            for line in BufReader::new(file).lines() {
                let line = line.map_err(|e| Error::io(input, e))?;
                let (text, rep) = neutralize_document(&line, *max_tokens, &r);
                writeln!(w, "{text}").map_err(|e| Error::io(out, e))?;
                reports.push(rep);
            }
            w.flush().map_err(|e| Error::io(out, e))?;
            if let Some(p) = report {
                let lines: Vec<String> = reports
                    .iter()
                    .map(|r| serde_json::to_string(r).map_err(|e| Error::json(p, e)))
                    .collect::<Result<_>>()?;
                std::fs::write(p, lines.join("\n") + "\n").map_err(|e| Error::io(p, e))?;
            }
            log::info!("neutralized {} documents", reports.len());
            Ok(())
        }
        Command::Synth {
            spec,
            n,
            d,
            r_true,
            leak,
            seed: s,
            out,
        } => {
            let mut sp: SynthSpec = match spec {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                    serde_json::from_str(&text).map_err(|e| Error::json(p, e))?
                }
                None => SynthSpec::default(),
            };
            sp.n = n.unwrap_or(sp.n);
            sp.d = d.unwrap_or(sp.d);
            sp.r_true = r_true.unwrap_or(sp.r_true);
            sp.leak = leak.unwrap_or(sp.leak);
            sp.seed = seed(cli, *s, sp.seed);
            let generated = synth_generate(&sp)?;
            std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
            save_bundle(&generated.bundle, out)?;
            generated.meta.save(&out.join("synth_meta.json"))?;
            log::info!(
                "wrote {} rows to {} (sensitive floor {:.4})",
                sp.n,
                out.display(),
                generated.meta.floor_accuracy
            );
            Ok(())
        }
        Command::Decompose {
            bundle,
            r,
            seed: s,
            method,
            out,
        } => {
            let cfg = base_config(cli)?;
            let b = load_bundle_dir(bundle)?;
            let options = SvdOptions {
                force_method: match method {
                    Method::Auto => None,
                    Method::DenseJacobi => Some(SvdMethod::DenseJacobi),
                    Method::Randomized => Some(SvdMethod::Randomized),
                },
                ..cfg.decompose.svd.clone()
            };
            let r = r.unwrap_or(cfg.decompose.r);
            let basis = truncated_svd_with(&b.embeddings, r, seed(cli, *s, cfg.decompose.seed), &options)?;
            save_basis(&basis, out)?;
            log::info!("basis with r = {} written to {}", basis.r(), out.display());
            Ok(())
        }
        Command::TrainHead {
            bundle,
            target,
            train,
            out,
        } => {
            let cfg = base_config(cli)?;
            let t = train_config(cli, &cfg, train);
            let mut split = cfg.split.clone();
            split.seed = seed(cli, train.split_seed, split.seed);
            let b = load_bundle_dir(bundle)?;
            let idx = split_indices(&b, &split)?;
            let labels = match target {
                Target::Task => &b.task,
                Target::Sensitive => &b.sensitive,
            };
            let pick = |rows: &[usize]| rows.iter().map(|&i| labels.values()[i]).collect::<Vec<_>>();
            let x = |rows: &[usize]| b.embeddings.select_rows(rows);
            let head = train_head(
                x(&idx.train).view(),
                &pick(&idx.train),
                x(&idx.val).view(),
                &pick(&idx.val),
                labels.num_classes(),
                &t,
            )?;
            let test_acc = head.accuracy(x(&idx.test).view(), &pick(&idx.test))?;
            save_head(&head, out)?;
            log::info!(
                "lr {} val accuracy {:.4} test accuracy {:.4}",
                head.meta.learning_rate,
                head.meta.val_accuracy,
                test_acc
            );
            Ok(())
        }
        Command::Importance {
            basis,
            task_head,
            sensitive_head,
            bundle,
            split_seed,
            n,
            eval_rows,
            seed: s,
            out,
        } => {
            let cfg = base_config(cli)?;
            let basis = load_basis(basis)?;
            let th = load_head(task_head)?;
            let sh = load_head(sensitive_head)?;
            let mut ic = cfg.importance.clone();
            ic.n = n.unwrap_or(ic.n);
            ic.eval_rows = eval_rows.unwrap_or(ic.eval_rows);
            ic.seed = seed(cli, *s, ic.seed);
            let rows = match bundle {
                Some(dir) => {
                    let b = load_bundle_dir(dir)?;
                    let mut split = cfg.split.clone();
                    split.seed = seed(cli, *split_seed, split.seed);
                    let idx = split_indices(&b, &split)?;
                    let val_task = b.task.select(&idx.val);
                    select_eval_rows(val_task.values(), ic.eval_rows, ic.seed)
                        .into_iter()
                        .map(|i| idx.val[i])
                        .collect()
                }
                None => select_eval_rows(&vec![0; basis.n()], ic.eval_rows, ic.seed),
            };
            let design_params = ic.design();
            let design = sample_design(basis.r(), &design_params)?;
            let concepts = co_importance(&basis, &th, &sh, &rows, &design)?;
            ImportanceReport {
                r: basis.r(),
                design: design_params,
                eval_rows: rows,
                concepts,
            }
            .save(out)
        }
        Command::Rank {
            importance,
            epsilon,
            out,
        } => {
            let cfg = base_config(cli)?;
            let eps = epsilon.unwrap_or(cfg.ranking.epsilon);
            let imp = ImportanceReport::load(importance)?;
            let file = pipeline::RankingFile {
                epsilon: eps,
                order: rank_concepts(&imp.concepts, eps)?,
                table: ranked_table(&imp.concepts, eps)?,
            };
            write_json(out, &file)
        }
        Command::Sweep {
            bundle,
            basis,
            importance,
            ks,
            train,
            out,
        } => {
            let cfg = base_config(cli)?;
            let t = train_config(cli, &cfg, train);
            let mut split = cfg.split.clone();
            split.seed = seed(cli, train.split_seed, split.seed);
            let b = load_bundle_dir(bundle)?;
            let basis = load_basis(basis)?;
            let imp = ImportanceReport::load(importance)?;
            let order = rank_concepts(&imp.concepts, cfg.ranking.epsilon)?;
            let ks = match ks {
                Some(s) => parse_ks(s)?,
                None => (0..basis.r()).collect(),
            };
            let idx = split_indices(&b, &split)?;
            let sweep_cfg = SweepConfig {
                train: t,
                regime_threshold: cfg.sweep.regime_threshold,
            };
            let extra = serde_json::json!({ "split": split, "importance": imp.design });
            match removal_sweep(&b, &idx, &basis, &order, &ks, &sweep_cfg) {
                Ok(mut report) => {
                    report.echo.extra = extra;
                    pipeline::write_report(out, &report, Some(&imp.concepts))?;
                    Ok(())
                }
                Err(Error::SweepAborted { k, mut partial, source }) => {
                    partial.echo.extra = extra;
                    pipeline::write_report(out, &partial, Some(&imp.concepts))?;
                    Err(Error::SweepAborted { k, partial, source })
                }
                Err(e) => Err(e),
            }
        }
        Command::Explain {
            basis,
            occlusions,
            concept,
            normalize,
            html,
            out,
        } => {
            let basis = load_basis(basis)?;
            let set = load_occlusion_set(occlusions)?;
            let norm = match normalize {
                Norm::Raw => Normalization::Raw,
                Norm::MaxAbs => Normalization::MaxAbs,
            };
            let imp = occlusion_importance(&set, &basis, *concept, norm)?;
            write_json(
                out,
                &serde_json::json!({
                    "document_id": set.document_id,
                    "concept_index": concept,
                    "normalization": imp.normalization,
                    "granularity": set.granularity,
                    "units": explain_units(&set, &imp),
                }),
            )?;
            if let Some(p) = html {
                std::fs::write(p, render_html(&set, &imp)).map_err(|e| Error::io(p, e))?;
            }
            Ok(())
        }
        Command::Run => {
            if cli.config.is_none() {
                return Err(Error::Validation("`run` needs --config".into()));
            }
            let cfg = base_config(cli)?;
            let summary = pipeline::run(&cfg)?;
            log::info!(
                "artifacts in {} (ran: {:?}, up to date: {:?})",
                summary.output_dir.display(),
                summary.executed,
                summary.skipped
            );
            Ok(())
        }
        Command::Report { dir } => {
            for p in pipeline::emit_report(dir)? {
                log::info!("wrote {}", p.display());
            }
            Ok(())
        }
    }
}
