use ladder_laws::plot::{emit_plot, PlotKind, PlotPoint, Series};

fn series() -> Vec<Series> {
    let point = |x: f64, y: f64, m: f64| PlotPoint {
        x,
        y,
        multiplier: Some(m),
    };
    vec![
        Series {
            name: "190M".into(),
            points: vec![point(3.8e9, 1.21, 1.0), point(7.6e9, 1.15, 2.0), point(1.9e10, 1.09, 5.0)],
            fit: vec![(3.8e9, 1.22), (1.9e10, 1.08)],
        },
        Series {
            name: "1.3B <held out>".into(),
            points: vec![point(2.6e10, 0.98, 1.0), point(2.6e11, 0.90, 10.0)],
            fit: Vec::new(),
        },
    ]
}

#[test]
fn matches_golden_svg() {
    let svg = emit_plot("loss & tokens", PlotKind::LossVsTokens, &series()).unwrap();
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/loss_vs_tokens.svg");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(path, &svg).unwrap();
    }
    assert_eq!(svg, std::fs::read_to_string(path).unwrap());
}
