use std::fmt::Write;

use super::{OcclusionSet, TokenImportance};

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

/// Static HTML page with each unit shaded by its score: red supports the
/// concept, blue opposes it, opacity proportional to the magnitude.
pub fn render_html(set: &OcclusionSet, importance: &TokenImportance) -> String {
    let max = importance.scores.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let mut unit_of = vec![None; set.tokens.len()];
    for (u, &(start, end)) in set.unit_spans.iter().enumerate() {
        for slot in &mut unit_of[start..end] {
            *slot = Some(u);
        }
    }
    let mut body = String::new();
    for (i, tok) in set.tokens.iter().enumerate() {
        if i > 0 {
            body.push(' ');
        }
        match unit_of[i] {
            Some(u) => {
                let s = importance.scores[u];
                let alpha = if max > 0.0 { s.abs() / max } else { 0.0 };
                let rgb = if s >= 0.0 { "220,50,47" } else { "38,139,210" };
                let _ = write!(
                    body,
                    "<span title=\"unit {u}: {s:.6}\" style=\"background:rgba({rgb},{alpha:.3})\">{}</span>",
                    escape(tok)
                );
            }
            None => body.push_str(&escape(tok)),
        }
    }
    format!(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>{id} concept {c}</title></head>\n\
         <body style=\"font-family:sans-serif;line-height:1.8\">\n<h3>{id}, concept {c}</h3>\n<p>{body}</p>\n</body></html>\n",
        id = escape(&set.document_id),
        c = importance.concept_index,
    )
}
