//! Self-contained SVG line charts, no plotting dependency.
//!
//! The CSV stores raw values; charts apply a trailing moving average purely
//! for display. Each chart contains exactly one data polyline.

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 25.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 55.0;

/// Trailing moving average with a window of `window` samples.
pub fn moving_average(ys: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(ys.len());
    let mut sum = 0.0;
    for i in 0..ys.len() {
        sum += ys[i];
        if i >= window {
            sum -= ys[i - window];
        }
        let n = (i + 1).min(window);
        out.push(sum / n as f64);
    }
    out
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if (0.001..10000.0).contains(&a) {
        format!("{v:.4}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    } else {
        format!("{v:.2e}")
    }
}

/// Renders one smoothed series as a complete SVG document.
pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    xs: &[f64],
    ys: &[f64],
    smooth_window: usize,
) -> String {
    assert_eq!(xs.len(), ys.len(), "series length mismatch");
    let ys = moving_average(ys, smooth_window);

    let (xmin, xmax) = bounds(xs);
    let (ymin, ymax) = bounds(&ys);
    let xspan = (xmax - xmin).max(1e-12);
    let yspan = (ymax - ymin).max(1e-12);
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let px = |x: f64| MARGIN_LEFT + (x - xmin) / xspan * plot_w;
    let py = |y: f64| MARGIN_TOP + plot_h - (y - ymin) / yspan * plot_h;

    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    s.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    s.push_str(&format!(
        "  <text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" \
         text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    ));

    // Axes.
    let x0 = MARGIN_LEFT;
    let y0 = MARGIN_TOP + plot_h;
    s.push_str(&format!(
        "  <line x1=\"{x0}\" y1=\"{MARGIN_TOP}\" x2=\"{x0}\" y2=\"{y0}\" stroke=\"black\"/>\n"
    ));
    s.push_str(&format!(
        "  <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{}\" y2=\"{y0}\" stroke=\"black\"/>\n",
        MARGIN_LEFT + plot_w
    ));

    // Ticks and grid.
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = xmin + f * xspan;
        let xp = px(xv);
        s.push_str(&format!(
            "  <line x1=\"{xp}\" y1=\"{y0}\" x2=\"{xp}\" y2=\"{}\" stroke=\"black\"/>\n",
            y0 + 5.0
        ));
        s.push_str(&format!(
            "  <text x=\"{xp}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"middle\">{}</text>\n",
            y0 + 20.0,
            fmt_tick(xv)
        ));
        let yv = ymin + f * yspan;
        let yp = py(yv);
        s.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{yp}\" x2=\"{x0}\" y2=\"{yp}\" stroke=\"black\"/>\n",
            x0 - 5.0
        ));
        s.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"end\">{}</text>\n",
            x0 - 8.0,
            yp + 4.0,
            fmt_tick(yv)
        ));
        if i > 0 {
            s.push_str(&format!(
                "  <line x1=\"{x0}\" y1=\"{yp}\" x2=\"{}\" y2=\"{yp}\" stroke=\"#dddddd\"/>\n",
                MARGIN_LEFT + plot_w
            ));
        }
    }

    // Axis labels.
    s.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\">{}</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    ));
    s.push_str(&format!(
        "  <text x=\"18\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>\n",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        escape(y_label)
    ));

    // The data polyline.
    let mut points = String::new();
    for (x, y) in xs.iter().zip(&ys) {
        points.push_str(&format!("{:.2},{:.2} ", px(*x), py(*y)));
    }
    s.push_str(&format!(
        "  <polyline fill=\"none\" stroke=\"#2a6fb0\" stroke-width=\"1.5\" points=\"{}\"/>\n",
        points.trim_end()
    ));
    s.push_str("</svg>\n");
    s
}

fn bounds(vals: &[f64]) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in vals {
        if v.is_finite() {
            min = min.min(v);
            max = max.max(v);
        }
    }
    if !min.is_finite() || !max.is_finite() {
        (0.0, 1.0)
    } else if min == max {
        (min - 0.5, max + 0.5)
    } else {
        (min, max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_warmup_and_steady_state() {
        let ys = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let sm = moving_average(&ys, 2);
        assert_eq!(sm, vec![1.0, 1.5, 2.5, 3.5, 4.5]);
        // Window 1 is the identity.
        assert_eq!(moving_average(&ys, 1), ys);
    }

    #[test]
    fn chart_has_exactly_one_polyline_and_balanced_tags() {
        let xs: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (x / 10.0).sin()).collect();
        let svg = line_chart("reward", "update", "mean reward", &xs, &ys, 50);
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.starts_with("<?xml"));
        assert!(svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<svg").count(), svg.matches("</svg>").count());
        assert_eq!(svg.matches("<text").count(), svg.matches("</text>").count());
        // Escaping keeps the XML well formed.
        let svg2 = line_chart("a < b & c", "x", "y", &xs, &ys, 1);
        assert!(svg2.contains("a &lt; b &amp; c"));
    }

    #[test]
    fn constant_series_does_not_collapse() {
        let xs = vec![1.0, 2.0, 3.0];
        let ys = vec![0.5, 0.5, 0.5];
        let svg = line_chart("flat", "x", "y", &xs, &ys, 50);
        assert!(svg.contains("polyline"));
    }
}
