//! Confusion-matrix heatmaps (SVG) and plain-text metric summaries.

use std::fmt::Write as _;

use crate::metrics::{ConfusionMatrix, MetricReport};

/// Log-scaled intensity in `[0, 1]`: `ln(1 + count) / ln(1 + max)`.
pub fn intensity(count: u64, max: u64) -> f64 {
    if max == 0 {
        0.0
    } else {
        (count as f64).ln_1p() / (max as f64).ln_1p()
    }
}

/// White-to-dark-red ramp; every channel is non-increasing in `t`.
pub fn ramp(t: f64) -> (u8, u8, u8) {
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    (lerp(255.0, 120.0), lerp(255.0, 0.0), lerp(255.0, 16.0))
}

pub fn cell_color(count: u64, max: u64) -> String {
    let (r, g, b) = ramp(intensity(count, max));
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Heatmap with true classes as rows and predicted classes as columns.
pub fn confusion_svg(cm: &ConfusionMatrix, title: &str) -> String {
    let n = cm.n_classes();
    let cell = if n <= 12 { 40 } else { (480 / n).max(6) };
    let (left, top) = (70, 60);
    let size = cell * n;
    let (width, height) = (left + size + 20, top + size + 50);
    let max = cm.max_count();
    let show_counts = n <= 20;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        left + size / 2,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">predicted class</text>"#,
        left + size / 2,
        top - 24
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{0}" text-anchor="middle" font-size="12" transform="rotate(-90 16 {0})">true class</text>"#,
        top + size / 2
    );
    let tick = (cell as f64 * 0.35).clamp(6.0, 11.0);
    for i in 0..n {
        let c = left + i * cell + cell / 2;
        let r = top + i * cell + cell / 2;
        let _ = writeln!(s, r#"<text x="{c}" y="{}" text-anchor="middle" font-size="{tick}">{i}</text>"#, top - 6);
        let _ = writeln!(s, r#"<text x="{}" y="{r}" text-anchor="end" dominant-baseline="middle" font-size="{tick}">{i}</text>"#, left - 6);
    }
    for i in 0..n {
        for j in 0..n {
            let count = cm.get(i, j);
            let (x, y) = (left + j * cell, top + i * cell);
            let _ = writeln!(
                s,
                r##"<rect class="cell" data-true="{i}" data-pred="{j}" data-count="{count}" x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{}" stroke="#ddd"><title>true {i}, predicted {j}: {count}</title></rect>"##,
                cell_color(count, max)
            );
            if show_counts && count > 0 {
                let fg = if intensity(count, max) > 0.55 { "white" } else { "black" };
                let _ = writeln!(
                    s,
                    r#"<text x="{}" y="{}" text-anchor="middle" dominant-baseline="middle" font-size="{tick}" fill="{fg}">{count}</text>"#,
                    x + cell / 2,
                    y + cell / 2
                );
            }
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{left}" y="{}" font-size="11">color: log(1 + count), max {max}</text>"#,
        top + size + 30
    );
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Per-class one-vs-rest scores followed by the support-weighted totals.
pub fn summary_text(report: &MetricReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "class\tsupport\tweight\ttp\tfp\tfn\ttn\taccuracy\tprecision\trecall\tf1"
    );
    for c in &report.per_class {
        let _ = writeln!(
            s,
            "{}\t{}\t{:.6}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            c.class,
            c.support,
            c.weight,
            c.counts.tp,
            c.counts.fp,
            c.counts.fn_,
            c.counts.tn,
            c.scores.accuracy,
            c.scores.precision,
            c.scores.recall,
            c.scores.f1
        );
    }
    let w = &report.weighted;
    let _ = writeln!(s);
    let _ = writeln!(s, "pairs\t{}", report.total);
    let _ = writeln!(s, "class 0 excluded\t{}", report.class0_excluded);
    let _ = writeln!(s, "weighted accuracy\t{:.6}", w.accuracy);
    let _ = writeln!(s, "weighted precision\t{:.6}", w.precision);
    let _ = writeln!(s, "weighted recall\t{:.6}", w.recall);
    let _ = writeln!(s, "weighted f1\t{:.6}", w.f1);
    let _ = writeln!(s, "micro accuracy\t{:.6}", report.micro_accuracy);
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_darkens_with_count() {
        let a = ramp(intensity(1, 100));
        let b = ramp(intensity(50, 100));
        assert!(a.0 >= b.0 && a.1 >= b.1 && a.2 >= b.2);
        assert_eq!(cell_color(0, 10), "#ffffff");
        assert_eq!(cell_color(0, 0), "#ffffff");
    }

    #[test]
    fn svg_lists_every_cell() {
        let cm = ConfusionMatrix::from_counts(&[vec![3, 1], vec![0, 5]]).unwrap();
        let svg = confusion_svg(&cm, "a < b & c");
        assert_eq!(svg.matches(r#"class="cell""#).count(), 4);
        assert!(svg.contains("a &lt; b &amp; c"));
    }
}
