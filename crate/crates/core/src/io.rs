//! Polyline, gauge and constants files, plus SVG rendering of planar polylines.
//!
//! Polyline CSV: optional `#` comment lines (provenance), a `dim=n` header,
//! then one point per row. The JSON alternative is `{"dim": n, "points": [...]}`.

use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::error::{input, Error, Result};
use crate::norms::Gauge;
use crate::partition::Constants;
use crate::polyline::Polyline;

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Input(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PolylineJson {
    dim: usize,
    points: Vec<Vec<f64>>,
}

/// Parses either file format; JSON is recognised by a leading `{`.
pub fn parse_polyline(text: &str) -> Result<Polyline> {
    if text.trim_start().starts_with('{') {
        let raw: PolylineJson =
            serde_json::from_str(text).map_err(|e| Error::Input(format!("polyline JSON: {e}")))?;
        return checked(raw.dim, raw.points);
    }
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let Some((_, header)) = lines.next() else {
        return input("empty polyline file");
    };
    let dim: usize = header
        .trim()
        .strip_prefix("dim=")
        .and_then(|d| d.trim().parse().ok())
        .ok_or_else(|| Error::Input(format!("expected a dim=n header, found {header:?}")))?;
    let body: String = lines.map(|(_, l)| format!("{l}\n")).collect();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let mut points = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Input(format!("polyline CSV row {}: {e}", row + 1)))?;
        let p = rec
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Input(format!("polyline CSV row {}: {e}", row + 1)))?;
        points.push(p);
    }
    checked(dim, points)
}

fn checked(dim: usize, points: Vec<Vec<f64>>) -> Result<Polyline> {
    if let Some((i, _)) = points.iter().enumerate().find(|(_, p)| p.len() != dim) {
        return input(format!("point {} does not have {dim} coordinates", i + 1));
    }
    if points.iter().flatten().any(|x| !x.is_finite()) {
        return input("coordinates must be finite");
    }
    Polyline::new(points)
}

/// CSV text with `# key: value` provenance lines. Floats use the shortest
/// representation that round-trips, so output is byte-stable.
pub fn polyline_csv(poly: &Polyline, provenance: &[(&str, String)]) -> String {
    let mut s = String::new();
    for (k, v) in provenance {
        let _ = writeln!(s, "# {k}: {v}");
    }
    let _ = writeln!(s, "dim={}", poly.dim());
    for p in poly.points() {
        let row: Vec<String> = p.iter().map(|x| format!("{x:?}")).collect();
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

pub fn polyline_json(poly: &Polyline) -> String {
    serde_json::to_string_pretty(poly).expect("polyline serializes")
}

pub fn read_polyline(path: &Path) -> Result<Polyline> {
    parse_polyline(&read_to_string(path)?)
}

pub fn parse_gauge(text: &str) -> Result<Gauge> {
    serde_json::from_str(text).map_err(|e| Error::Input(format!("gauge JSON: {e}")))
}

pub fn read_gauge(path: &Path) -> Result<Gauge> {
    parse_gauge(&read_to_string(path)?)
}

pub fn read_constants(path: &Path) -> Result<Constants> {
    serde_json::from_str(&read_to_string(path)?).map_err(|e| Error::Input(format!("constants JSON: {e}")))
}

/// Planar polyline with the gauge ball of radius ‖A_r − A_1‖ centred at A_r.
pub fn polyline_svg(poly: &Polyline, gauge: &Gauge) -> Result<String> {
    if poly.dim() != 2 || gauge.dim() != 2 {
        return Err(Error::Unsupported("SVG output is only drawn for planar polylines".into()));
    }
    let last = poly.last();
    let radius = gauge.dist(poly.first(), last);
    let mut ball = Vec::new();
    if radius > 0.0 {
        for k in 0..256 {
            let t = k as f64 * std::f64::consts::TAU / 256.0;
            let bp = gauge.boundary_point(&[t.cos(), t.sin()])?;
            ball.push([last[0] + radius * bp.point[0], last[1] + radius * bp.point[1]]);
        }
    }
    let all: Vec<[f64; 2]> = poly.points().iter().map(|p| [p[0], p[1]]).chain(ball.iter().copied()).collect();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &all {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
    let size = 480.0;
    let pad = 20.0;
    let map = |p: &[f64; 2]| -> (f64, f64) {
        (
            pad + (p[0] - lo[0]) / span * size,
            pad + (hi[1] - p[1]) / span * size,
        )
    };
    let path = |pts: &[[f64; 2]]| -> String {
        pts.iter()
            .map(|p| {
                let (x, y) = map(p);
                format!("{x:.3},{y:.3}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    };
    let w = size + 2.0 * pad;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{w}\" viewBox=\"0 0 {w} {w}\">\n"
    );
    if !ball.is_empty() {
        let _ = writeln!(s, "  <polygon points=\"{}\" fill=\"none\" stroke=\"#999\"/>", path(&ball));
    }
    let pts: Vec<[f64; 2]> = poly.points().iter().map(|p| [p[0], p[1]]).collect();
    let _ = writeln!(s, "  <polyline points=\"{}\" fill=\"none\" stroke=\"#c22\"/>", path(&pts));
    for p in &pts {
        let (x, y) = map(p);
        let _ = writeln!(s, "  <circle cx=\"{x:.3}\" cy=\"{y:.3}\" r=\"2.5\"/>");
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::square_path;

    #[test]
    fn csv_round_trip() {
        let p = square_path();
        let text = polyline_csv(&p, &[("seed", "3".into())]);
        assert!(text.starts_with("# seed: 3\ndim=2\n"));
        assert_eq!(parse_polyline(&text).unwrap(), p);
        let q = Polyline::new(vec![vec![0.1, 1.0 / 3.0, -2e-300]]).unwrap();
        assert_eq!(parse_polyline(&polyline_csv(&q, &[])).unwrap(), q);
    }

    #[test]
    fn json_round_trip() {
        let p = square_path();
        assert_eq!(parse_polyline(&polyline_json(&p)).unwrap(), p);
    }

    #[test]
    fn malformed_files() {
        for bad in [
            "",
            "0,0\n1,1\n",
            "dim=2\n0,0\n1\n",
            "dim=2\n0,x\n",
            "dim=x\n0,0\n",
            "{\"dim\": 2, \"points\": [[0, 0], [1]]}",
            "dim=1\nNaN\n",
        ] {
            assert!(matches!(parse_polyline(bad), Err(Error::Input(_))), "{bad:?}");
        }
    }

    #[test]
    fn gauge_file() {
        let g = parse_gauge(r#"{"dim":2,"kind":"pnorm","p":"inf","symmetric":true}"#).unwrap();
        assert!(g.is_max_norm_plane());
        assert!(parse_gauge("{\"dim\":2}").is_err());
    }

    #[test]
    fn svg_only_in_the_plane() {
        let s = polyline_svg(&square_path(), &Gauge::max_norm(2)).unwrap();
        assert!(s.contains("<polyline") && s.contains("<polygon"));
        let p = Polyline::new(vec![vec![0.0; 3], vec![1.0; 3]]).unwrap();
        assert!(polyline_svg(&p, &Gauge::euclidean(3)).is_err());
    }
}
