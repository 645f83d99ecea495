//! Text artifacts: confusion and ROC tables, the ROC plot and a metrics
//! summary.

use std::fmt::Write;

use crate::metrics::{ConfusionMatrix, RocCurve};

pub fn confusion_csv(cm: &ConfusionMatrix) -> String {
    format!(
        "actual,predicted_positive,predicted_negative\npositive,{},{}\nnegative,{},{}\n",
        cm.tp, cm.fn_, cm.fp, cm.tn
    )
}

/// `threshold,fpr,tpr`; the origin point has no threshold.
pub fn roc_csv(curve: &RocCurve) -> String {
    let mut s = String::from("threshold,fpr,tpr\n");
    for (i, (fpr, tpr)) in curve.points.iter().enumerate() {
        let t = i.checked_sub(1).map_or_else(String::new, |j| format!("{:?}", curve.thresholds[j]));
        writeln!(s, "{t},{fpr:?},{tpr:?}").expect("string write");
    }
    s
}

/// Square line plot of the curve with the chance diagonal.
pub fn roc_svg(curve: &RocCurve) -> String {
    const SIZE: f64 = 400.0;
    const PAD: f64 = 40.0;
    let span = SIZE - 2.0 * PAD;
    let at = |x: f64, y: f64| (PAD + x * span, SIZE - PAD - y * span);
    let points: Vec<String> = curve
        .points
        .iter()
        .map(|&(x, y)| {
            let (px, py) = at(x, y);
            format!("{px:.2},{py:.2}")
        })
        .collect();
    let (x0, y0) = at(0.0, 0.0);
    let (x1, y1) = at(1.0, 1.0);
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#).unwrap();
    writeln!(s, r#"<rect x="{x0}" y="{y1}" width="{span}" height="{span}" fill="none" stroke="black"/>"#).unwrap();
    writeln!(s, r##"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y1}" stroke="#999" stroke-dasharray="4 4"/>"##).unwrap();
    writeln!(s, r##"<polyline fill="none" stroke="#c0392b" stroke-width="2" points="{}"/>"##, points.join(" ")).unwrap();
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">False positive rate</text>"#, SIZE / 2.0, SIZE - 10.0).unwrap();
    writeln!(s, r#"<text x="14" y="{}" text-anchor="middle" font-size="14" transform="rotate(-90 14 {})">True positive rate</text>"#, SIZE / 2.0, SIZE / 2.0).unwrap();
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="end" font-size="14">AUC = {:.4}</text>"#, x1 - 6.0, y0 - 8.0, curve.auc).unwrap();
    s.push_str("</svg>\n");
    s
}

fn rate(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |x| format!("{x:.4}"))
}

/// Human-readable metrics block.
pub fn metrics_text(cm: &ConfusionMatrix, auc: Option<f64>) -> String {
    let r = cm.rates();
    let mut s = String::new();
    writeln!(s, "confusion: tp={} fn={} tn={} fp={}", cm.tp, cm.fn_, cm.tn, cm.fp).unwrap();
    writeln!(s, "tpr={} tnr={} fpr={}", rate(r.tpr), rate(r.tnr), rate(r.fpr)).unwrap();
    writeln!(s, "accuracy={} balanced_accuracy={}", rate(r.accuracy), rate(r.balanced_accuracy)).unwrap();
    writeln!(s, "f_score={} precision={}", rate(r.f_score), rate(r.precision)).unwrap();
    writeln!(s, "auc={}", rate(auc)).unwrap();
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::roc;

    #[test]
    fn tables() {
        let cm = ConfusionMatrix { tp: 1, fn_: 2, tn: 3, fp: 4 };
        assert_eq!(
            confusion_csv(&cm),
            "actual,predicted_positive,predicted_negative\npositive,1,2\nnegative,4,3\n"
        );
        let curve = roc(&[0.9, 0.2], &[true, false]).unwrap();
        assert_eq!(roc_csv(&curve), "threshold,fpr,tpr\n,0.0,0.0\n0.9,0.0,1.0\n0.2,1.0,1.0\n");
        let svg = roc_svg(&curve);
        assert!(svg.starts_with("<svg") && svg.contains("AUC = 1.0000"));
        assert!(metrics_text(&ConfusionMatrix { tn: 2, ..cm }, None).contains("auc=undefined"));
    }
}
