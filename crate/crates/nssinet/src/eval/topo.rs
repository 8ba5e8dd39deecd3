//! Scalp topography: a static 10-20/10-10 coordinate table and an SVG
//! scatter of per-channel scores.
//!
//! Coordinates are schematic 2D montage positions (x to the right, y toward
//! the nose, head radius 1). Channels whose names are not in the table are
//! laid out on a fallback ring so synthetic cohorts with generic channel
//! names still render.

/// Schematic (name, x, y) electrode positions.
pub const CHANNEL_POSITIONS: &[(&str, f64, f64)] = &[
    ("Fp1", -0.31, 0.95),
    ("Fp2", 0.31, 0.95),
    ("AF7", -0.59, 0.81),
    ("AF3", -0.33, 0.78),
    ("AFz", 0.0, 0.75),
    ("AF4", 0.33, 0.78),
    ("AF8", 0.59, 0.81),
    ("F7", -0.81, 0.59),
    ("F5", -0.63, 0.56),
    ("F3", -0.45, 0.53),
    ("F1", -0.23, 0.51),
    ("Fz", 0.0, 0.5),
    ("F2", 0.23, 0.51),
    ("F4", 0.45, 0.53),
    ("F6", 0.63, 0.56),
    ("F8", 0.81, 0.59),
    ("FT9", -1.03, 0.37),
    ("FT7", -0.92, 0.31),
    ("FC5", -0.69, 0.28),
    ("FC3", -0.46, 0.26),
    ("FC1", -0.23, 0.25),
    ("FCz", 0.0, 0.25),
    ("FC2", 0.23, 0.25),
    ("FC4", 0.46, 0.26),
    ("FC6", 0.69, 0.28),
    ("FT8", 0.92, 0.31),
    ("FT10", 1.03, 0.37),
    ("T7", -1.0, 0.0),
    ("C5", -0.75, 0.0),
    ("C3", -0.5, 0.0),
    ("C1", -0.25, 0.0),
    ("Cz", 0.0, 0.0),
    ("C2", 0.25, 0.0),
    ("C4", 0.5, 0.0),
    ("C6", 0.75, 0.0),
    ("T8", 1.0, 0.0),
    ("TP9", -1.03, -0.37),
    ("TP7", -0.92, -0.31),
    ("CP5", -0.69, -0.28),
    ("CP3", -0.46, -0.26),
    ("CP1", -0.23, -0.25),
    ("CPz", 0.0, -0.25),
    ("CP2", 0.23, -0.25),
    ("CP4", 0.46, -0.26),
    ("CP6", 0.69, -0.28),
    ("TP8", 0.92, -0.31),
    ("TP10", 1.03, -0.37),
    ("P7", -0.81, -0.59),
    ("P5", -0.63, -0.56),
    ("P3", -0.45, -0.53),
    ("P1", -0.23, -0.51),
    ("Pz", 0.0, -0.5),
    ("P2", 0.23, -0.51),
    ("P4", 0.45, -0.53),
    ("P6", 0.63, -0.56),
    ("P8", 0.81, -0.59),
    ("PO9", -0.63, -0.87),
    ("PO7", -0.59, -0.81),
    ("PO3", -0.33, -0.78),
    ("POz", 0.0, -0.75),
    ("PO4", 0.33, -0.78),
    ("PO8", 0.59, -0.81),
    ("PO10", 0.63, -0.87),
    ("O1", -0.31, -0.95),
    ("Oz", 0.0, -1.0),
    ("O2", 0.31, -0.95),
];

/// Look up a channel position by name (case-insensitive).
pub fn position_of(name: &str) -> Option<(f64, f64)> {
    CHANNEL_POSITIONS
        .iter()
        .find(|(n, _, _)| n.eq_ignore_ascii_case(name))
        .map(|(_, x, y)| (*x, *y))
}

fn color_for(score: f64) -> String {
    // blue (low) -> white -> red (high)
    let s = score.clamp(0.0, 1.0);
    let (r, g, b) = if s < 0.5 {
        let t = s / 0.5;
        ((255.0 * t) as u8, (255.0 * t) as u8, 255u8)
    } else {
        let t = (s - 0.5) / 0.5;
        (255u8, (255.0 * (1.0 - t)) as u8, (255.0 * (1.0 - t)) as u8)
    };
    format!("rgb({r},{g},{b})")
}

/// Render per-channel scores as a topographic SVG scatter. `scores` must be
/// in [0, 1] (NaN channels are drawn gray).
pub fn svg_topomap(names: &[String], scores: &[f64]) -> String {
    let size = 640.0;
    let center = size / 2.0;
    let head_r = size * 0.38;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">\n"
    ));
    svg.push_str(&format!(
        "  <circle cx=\"{center}\" cy=\"{center}\" r=\"{head_r}\" fill=\"none\" stroke=\"black\" stroke-width=\"2\"/>\n"
    ));
    // nose
    svg.push_str(&format!(
        "  <path d=\"M {} {} L {} {} L {} {}\" fill=\"none\" stroke=\"black\" stroke-width=\"2\"/>\n",
        center - 14.0,
        center - head_r + 2.0,
        center,
        center - head_r - 16.0,
        center + 14.0,
        center - head_r + 2.0
    ));
    let n_fallback = names.iter().filter(|n| position_of(n).is_none()).count().max(1);
    let mut fallback_i = 0usize;
    for (i, name) in names.iter().enumerate() {
        let (x, y) = position_of(name).unwrap_or_else(|| {
            let angle = 2.0 * std::f64::consts::PI * fallback_i as f64 / n_fallback as f64
                - std::f64::consts::FRAC_PI_2;
            fallback_i += 1;
            (0.72 * angle.cos(), -0.72 * angle.sin())
        });
        let px = center + x * head_r * 0.92;
        let py = center - y * head_r * 0.92;
        let score = scores.get(i).copied().unwrap_or(f64::NAN);
        let fill = if score.is_finite() { color_for(score) } else { "rgb(160,160,160)".into() };
        svg.push_str(&format!(
            "  <circle cx=\"{px:.1}\" cy=\"{py:.1}\" r=\"13\" fill=\"{fill}\" stroke=\"black\" stroke-width=\"1\"/>\n"
        ));
        svg.push_str(&format!(
            "  <text x=\"{px:.1}\" y=\"{:.1}\" font-size=\"9\" text-anchor=\"middle\" font-family=\"sans-serif\">{}</text>\n",
            py + 3.0,
            name
        ));
        if score.is_finite() {
            svg.push_str(&format!(
                "  <text x=\"{px:.1}\" y=\"{:.1}\" font-size=\"8\" text-anchor=\"middle\" font-family=\"sans-serif\">{score:.2}</text>\n",
                py + 22.0
            ));
        }
    }
    // legend
    for i in 0..=10 {
        let s = i as f64 / 10.0;
        svg.push_str(&format!(
            "  <rect x=\"{:.1}\" y=\"{:.1}\" width=\"18\" height=\"12\" fill=\"{}\"/>\n",
            size - 40.0,
            size - 30.0 - i as f64 * 12.0,
            color_for(s)
        ));
    }
    svg.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" font-family=\"sans-serif\">1.0</text>\n",
        size - 64.0,
        size - 30.0 - 10.0 * 12.0 + 10.0
    ));
    svg.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" font-family=\"sans-serif\">0.0</text>\n",
        size - 64.0,
        size - 20.0
    ));
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_names_resolve_and_unknown_fall_back() {
        assert!(position_of("Cz").unwrap() == (0.0, 0.0));
        assert!(position_of("fp1").is_some());
        assert!(position_of("ch00").is_none());
        let names: Vec<String> = (0..8).map(|i| format!("ch{i:02}")).collect();
        let scores: Vec<f64> = (0..8).map(|i| i as f64 / 7.0).collect();
        let svg = svg_topomap(&names, &scores);
        assert!(svg.contains("<svg"));
        assert_eq!(svg.matches("<circle").count(), 9, "head + 8 electrodes");
    }
}
