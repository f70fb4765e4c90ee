//! Outlier-map CSV and SVG rendering.
//!
//! CSV layout: a header `scale,1,2,...,N` followed by one row per scale,
//! `k,p(k,1),...,p(k,N)`. Absent cells are empty fields.

use std::fmt::Write as _;

use anyhow::anyhow;
use mrad::PValueMap;

use crate::Failure;

pub fn to_csv(map: &PValueMap) -> String {
    let n = map.len();
    let mut out = String::with_capacity(n * map.num_scales() * 8);
    out.push_str("scale");
    for t in 1..=n {
        write!(out, ",{t}").unwrap();
    }
    out.push('\n');
    for k in 1..=map.num_scales() {
        write!(out, "{k}").unwrap();
        for t in 1..=n {
            out.push(',');
            if let Some(p) = map.get(k, t) {
                write!(out, "{p}").unwrap();
            }
        }
        out.push('\n');
    }
    out
}

/// A parsed map: `rows[k-1][col]`, `None` for absent cells.
#[derive(Debug, Clone, PartialEq)]
pub struct MapGrid {
    pub times: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

pub fn parse_csv(text: &str) -> Result<MapGrid, Failure> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Failure::Usage(anyhow!("map CSV is empty")))?;
    let times: Vec<String> = header
        .split(',')
        .skip(1)
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines {
        let mut fields = line.split(',');
        let scale = fields.next().unwrap_or("").trim();
        if scale.parse::<usize>().ok() != Some(rows.len() + 1) {
            return Err(Failure::Usage(anyhow!(
                "line {}: expected scale {}, found `{scale}`",
                i + 1,
                rows.len() + 1
            )));
        }
        let cells = fields
            .map(|f| {
                let f = f.trim();
                if f.is_empty() {
                    return Ok(None);
                }
                f.parse::<f64>()
                    .ok()
                    .filter(|p| (0.0..=1.0).contains(p))
                    .map(Some)
                    .ok_or_else(|| Failure::Usage(anyhow!("line {}: invalid p-value `{f}`", i + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if cells.len() != times.len() {
            return Err(Failure::Usage(anyhow!(
                "line {}: {} cells, header has {}",
                i + 1,
                cells.len(),
                times.len()
            )));
        }
        rows.push(cells);
    }
    if rows.is_empty() {
        return Err(Failure::Usage(anyhow!("map CSV has no scale rows")));
    }
    Ok(MapGrid { times, rows })
}

pub const HOT: [u8; 3] = [215, 48, 39];
pub const MID: [u8; 3] = [255, 255, 191];
pub const COOL: [u8; 3] = [69, 117, 180];
pub const ABSENT: &str = "#bfbfbf";

/// Piecewise-linear RGB ramp: p = 0 → HOT, p = 0.5 → MID, p = 1 → COOL,
/// channels rounded to the nearest integer.
pub fn color(p: f64) -> String {
    let p = p.clamp(0.0, 1.0);
    let (a, b, f) = if p <= 0.5 {
        (HOT, MID, p / 0.5)
    } else {
        (MID, COOL, (p - 0.5) / 0.5)
    };
    let ch = |i: usize| (a[i] as f64 + f * (b[i] as f64 - a[i] as f64)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", ch(0), ch(1), ch(2))
}

/// Renders columns `[from, to)` as an SVG heatmap with scale 1 at the
/// bottom. Horizontal runs of equal colour share one rectangle.
pub fn render_svg(grid: &MapGrid, from: usize, to: usize) -> String {
    let cols = to - from;
    let rows = grid.rows.len();
    let cell_h = 16usize;
    let width = 960usize;
    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{}" viewBox="0 0 {cols} {}" preserveAspectRatio="none" shape-rendering="crispEdges">"#,
        rows * cell_h,
        rows * cell_h
    )
    .unwrap();
    writeln!(
        out,
        "<!-- mrad outlier map: times {}..{} (columns {from}..{to}), scales 1..{rows} bottom to top. \
         Colour ramp: p-value mapped piecewise-linearly in RGB, p=0 {} -> p=0.5 {} -> p=1 {}, \
         channels rounded to nearest integer; absent cells {ABSENT}. -->",
        grid.times.get(from).map(String::as_str).unwrap_or(""),
        grid.times.get(to - 1).map(String::as_str).unwrap_or(""),
        hex(HOT),
        hex(MID),
        hex(COOL),
    )
    .unwrap();
    for (r, row) in grid.rows.iter().enumerate() {
        let y = (rows - 1 - r) * cell_h;
        let colors: Vec<String> = row[from..to]
            .iter()
            .map(|c| c.map(color).unwrap_or_else(|| ABSENT.to_string()))
            .collect();
        let mut start = 0;
        while start < cols {
            let mut end = start + 1;
            while end < cols && colors[end] == colors[start] {
                end += 1;
            }
            writeln!(
                out,
                r#"<rect x="{start}" y="{y}" width="{}" height="{cell_h}" fill="{}"/>"#,
                end - start,
                colors[start]
            )
            .unwrap();
            start = end;
        }
    }
    out.push_str("</svg>\n");
    out
}

fn hex(c: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}
