//! Minimal SVG line plots for ROC and FROC curves.

use std::fmt::Write;

use super::froc::FrocCurve;
use super::roc::RocCurve;

const W: f64 = 480.0;
const H: f64 = 360.0;
const MARGIN: f64 = 50.0;

fn line_plot(title: &str, x_label: &str, y_label: &str, xs: &[(f64, f64)], x_max: f64) -> String {
    let pw = W - 2.0 * MARGIN;
    let ph = H - 2.0 * MARGIN;
    let to_px = |x: f64, y: f64| (MARGIN + x / x_max * pw, H - MARGIN - y * ph);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (x, y0) = to_px(f * x_max, 0.0);
        let (x0, y) = to_px(0.0, f);
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{:.2}</text>"#,
            y0 + 16.0,
            f * x_max
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{f:.2}</text>"#,
            x0 - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="14">{title}</text>"#, W / 2.0);
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{x_label}</text>"#, W / 2.0, H - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{y_label}</text>"#,
        H / 2.0,
        H / 2.0
    );
    let pts: Vec<String> = xs
        .iter()
        .map(|&(x, y)| {
            let (px, py) = to_px(x.min(x_max), y);
            format!("{px:.2},{py:.2}")
        })
        .collect();
    let _ = writeln!(
        s,
        r#"<polyline fill="none" stroke="steelblue" stroke-width="2" points="{}"/>"#,
        pts.join(" ")
    );
    s.push_str("</svg>\n");
    s
}

pub fn roc_svg(curve: &RocCurve) -> String {
    let pts: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.fpr, p.tpr)).collect();
    roc_plot(&pts, curve.auroc)
}

/// FROC plotted over 0 to 1 false positives per image.
pub fn froc_svg(curve: &FrocCurve) -> String {
    let pts: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.fp_per_image, p.recall)).collect();
    froc_plot(&pts, curve.froc_score)
}

/// ROC plot from `(fpr, tpr)` pairs.
pub fn roc_plot(points: &[(f64, f64)], auroc: f64) -> String {
    line_plot(
        &format!("ROC (AUROC {auroc:.4})"),
        "false positive rate",
        "true positive rate",
        points,
        1.0,
    )
}

/// FROC plot from `(fp_per_image, recall)` pairs in sweep order; points
/// past one false positive per image are cut.
pub fn froc_plot(points: &[(f64, f64)], score: f64) -> String {
    let kept: Vec<(f64, f64)> = points.iter().copied().take_while(|p| p.0 <= 1.0).collect();
    line_plot(
        &format!("FROC (score {score:.4})"),
        "false positives per image",
        "recall",
        &kept,
        1.0,
    )
}
