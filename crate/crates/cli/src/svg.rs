//! Hand-rendered SVG line plots: log-scale y axis, one mean curve per
//! series with a translucent one-standard-error band. Output bytes are a
//! pure function of the input data.

use std::fmt::Write as _;

pub struct Series {
    pub label: String,
    pub xs: Vec<f64>,
    pub mean: Vec<f64>,
    pub sem: Vec<f64>,
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 25.0;
const MARGIN_T: f64 = 45.0;
const MARGIN_B: f64 = 55.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

fn fmt(v: f64) -> String {
    format!("{v:.3}")
}

/// Positive floor used to place non-positive values on the log axis.
fn positive_floor(series: &[Series]) -> f64 {
    let mut min_pos = f64::INFINITY;
    for s in series {
        for m in s.mean.iter().chain(&s.sem) {
            if *m > 0.0 && *m < min_pos {
                min_pos = *m;
            }
        }
    }
    if min_pos.is_finite() {
        min_pos * 1e-2
    } else {
        1e-12
    }
}

pub fn render(series: &[Series], title: &str, xlabel: &str, ylabel: &str) -> String {
    assert!(!series.is_empty());
    let floor = positive_floor(series);
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for (i, x) in s.xs.iter().enumerate() {
            x_min = x_min.min(*x);
            x_max = x_max.max(*x);
            let lo = (s.mean[i] - s.sem[i]).max(floor);
            let hi = (s.mean[i] + s.sem[i]).max(floor);
            y_min = y_min.min(lo);
            y_max = y_max.max(hi);
        }
    }
    if x_max <= x_min {
        x_max = x_min + 1.0;
    }
    let (ly_min, ly_max) = {
        let a = y_min.log10().floor();
        let b = y_max.log10().ceil();
        if b > a {
            (a, b)
        } else {
            (a, a + 1.0)
        }
    };
    let px = |x: f64| MARGIN_L + (x - x_min) / (x_max - x_min) * (WIDTH - MARGIN_L - MARGIN_R);
    let py = |y: f64| {
        let ly = y.max(floor).log10();
        HEIGHT - MARGIN_B - (ly - ly_min) / (ly_max - ly_min) * (HEIGHT - MARGIN_T - MARGIN_B)
    };

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">"
    );
    let _ = writeln!(
        out,
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
    );
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"25\" text-anchor=\"middle\" font-size=\"16\">{}</text>",
        WIDTH / 2.0,
        escape(title)
    );

    // axes
    let _ = writeln!(
        out,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        fmt(MARGIN_L),
        fmt(HEIGHT - MARGIN_B),
        fmt(WIDTH - MARGIN_R),
        fmt(HEIGHT - MARGIN_B)
    );
    let _ = writeln!(
        out,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        fmt(MARGIN_L),
        fmt(MARGIN_T),
        fmt(MARGIN_L),
        fmt(HEIGHT - MARGIN_B)
    );

    // y ticks at powers of ten
    let mut dec = ly_min;
    while dec <= ly_max + 1e-9 {
        let y = py(10f64.powf(dec));
        let _ = writeln!(
            out,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#cccccc\" stroke-width=\"0.5\"/>",
            fmt(MARGIN_L),
            fmt(y),
            fmt(WIDTH - MARGIN_R),
            fmt(y)
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"11\">1e{}</text>",
            fmt(MARGIN_L - 6.0),
            fmt(y + 4.0),
            dec as i64
        );
        dec += 1.0;
    }

    // x ticks
    for k in 0..=5 {
        let x = x_min + (x_max - x_min) * k as f64 / 5.0;
        let sx = px(x);
        let _ = writeln!(
            out,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
            fmt(sx),
            fmt(HEIGHT - MARGIN_B),
            fmt(sx),
            fmt(HEIGHT - MARGIN_B + 5.0)
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{}</text>",
            fmt(sx),
            fmt(HEIGHT - MARGIN_B + 18.0),
            x.round() as i64
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\">{}</text>",
        fmt((MARGIN_L + WIDTH - MARGIN_R) / 2.0),
        fmt(HEIGHT - 12.0),
        escape(xlabel)
    );
    let _ = writeln!(
        out,
        "<text x=\"20\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 20 {})\">{}</text>",
        fmt((MARGIN_T + HEIGHT - MARGIN_B) / 2.0),
        fmt((MARGIN_T + HEIGHT - MARGIN_B) / 2.0),
        escape(ylabel)
    );

    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        // one-standard-error band (skipped when every half-width is zero)
        if s.sem.iter().any(|e| *e > 0.0) {
            let mut band = String::from("M");
            for (i, x) in s.xs.iter().enumerate() {
                let _ = write!(
                    band,
                    " {} {}",
                    fmt(px(*x)),
                    fmt(py((s.mean[i] + s.sem[i]).max(floor)))
                );
            }
            band.push_str(" L");
            for (i, x) in s.xs.iter().enumerate().rev() {
                let _ = write!(
                    band,
                    " {} {}",
                    fmt(px(*x)),
                    fmt(py((s.mean[i] - s.sem[i]).max(floor)))
                );
            }
            band.push_str(" Z");
            let _ = writeln!(
                out,
                "<path d=\"{band}\" fill=\"{color}\" fill-opacity=\"0.18\" stroke=\"none\"/>"
            );
        }
        let mut line = String::new();
        for (i, x) in s.xs.iter().enumerate() {
            let _ = write!(
                line,
                "{}{},{}",
                if i == 0 { "" } else { " " },
                fmt(px(*x)),
                fmt(py(s.mean[i]))
            );
        }
        let _ = writeln!(
            out,
            "<polyline points=\"{line}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>"
        );
        // legend entry
        let ly = MARGIN_T + 18.0 * si as f64;
        let _ = writeln!(
            out,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\" stroke-width=\"2\"/>",
            fmt(WIDTH - MARGIN_R - 150.0),
            fmt(ly),
            fmt(WIDTH - MARGIN_R - 120.0),
            fmt(ly)
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\">{}</text>",
            fmt(WIDTH - MARGIN_R - 112.0),
            fmt(ly + 4.0),
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_series() -> Vec<Series> {
        vec![Series {
            label: "sgd".into(),
            xs: vec![0.0, 20.0, 40.0],
            mean: vec![1.0, 0.1, 0.01],
            sem: vec![0.1, 0.01, 0.001],
        }]
    }

    #[test]
    fn output_is_deterministic() {
        let a = render(&demo_series(), "demo", "t", "metric");
        let b = render(&demo_series(), "demo", "t", "metric");
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.contains("polyline"));
        assert!(a.contains("fill-opacity"));
    }

    #[test]
    fn single_seed_series_has_no_band() {
        let s = vec![Series {
            label: "adam".into(),
            xs: vec![0.0, 1.0],
            mean: vec![1.0, 0.5],
            sem: vec![0.0, 0.0],
        }];
        let svg = render(&s, "", "t", "y");
        assert!(!svg.contains("fill-opacity"), "no band when sem is zero");
    }
}
