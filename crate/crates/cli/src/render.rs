//! SVG rendering of squished configurations.
//!
//! Coordinates are the lattice coordinates of the b-face centers, which
//! are the vertices of the squished graph; y points up. Each a-dimer is a
//! segment between the b-faces of its endpoints.

use aztec_core::heights::HeightField;
use aztec_core::lattice::Pt;
use aztec_core::squish::{Decomposition, SquishedConfig};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use std::fmt::Write;

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColorBy {
    /// Double edges grey, loops blue, paths red.
    Class,
    /// a-faces shaded by corridor height, dimers black.
    Corridor,
    /// Everything black.
    None,
}

#[derive(Clone, Debug)]
pub struct RenderOptions {
    pub color: ColorBy,
    pub mirrors: bool,
    pub scale: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions { color: ColorBy::Class, mirrors: false, scale: 4.0 }
    }
}

const DOUBLE: &str = "#8c8c8c";
const LOOP: &str = "#1f5fb4";
const PATH: &str = "#c8281e";
const MIRROR: &str = "#1a9a3a";
const CORRIDOR: [&str; 8] = ["#fde0c5", "#facba6", "#f8b58b", "#f59e72", "#f2855d", "#ef6a4c", "#eb4a40", "#e8e0f5"];

#[derive(Clone, Copy, PartialEq, Eq)]
enum Class {
    Double,
    Loop,
    Path,
}

/// The SVG document; identical input gives identical bytes.
pub fn render_svg(
    sq: &SquishedConfig,
    dec: &Decomposition,
    corridor: Option<&HeightField>,
    opts: &RenderOptions,
    config_hash: Option<&str>,
) -> String {
    let s = opts.scale;
    let (x0, y0, x1, y1) = sq.interior.bounds();
    let (x0, y0, x1, y1) = (x0 - 2, y0 - 2, x1 + 2, y1 + 2);
    let (w, h) = (((x1 - x0).max(0) as f64) * s, ((y1 - y0).max(0) as f64) * s);
    let pxf = |x: f64, y: f64| ((x - x0 as f64) * s, (y1 as f64 - y) * s);
    let px = |p: Pt| pxf(p.0 as f64, p.1 as f64);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.2}" height="{h:.2}" viewBox="0 0 {w:.2} {h:.2}">"#
    );
    if let Some(hash) = config_hash {
        let _ = writeln!(out, "<!-- config_hash={hash} -->");
    }
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{w:.2}" height="{h:.2}" fill="white"/>"#);

    if opts.color == ColorBy::Corridor {
        if let Some(hc) = corridor {
            let _ = writeln!(out, r#"<g stroke="none">"#);
            for (c, v) in hc.iter() {
                let pts: Vec<String> = [(2, 0), (0, 2), (-2, 0), (0, -2)]
                    .iter()
                    .map(|d| {
                        let (x, y) = px((c.0 + d.0, c.1 + d.1));
                        format!("{x:.2},{y:.2}")
                    })
                    .collect();
                let fill = CORRIDOR[(v.div_euclid(4)).rem_euclid(CORRIDOR.len() as i32) as usize];
                let _ = writeln!(out, r#"<polygon points="{}" fill="{fill}"/>"#, pts.join(" "));
            }
            let _ = writeln!(out, "</g>");
        }
    }

    let mut class = vec![None; sq.dimers.len()];
    for &(i, j) in &dec.double_edges {
        class[i as usize] = Some(Class::Double);
        class[j as usize] = Some(Class::Double);
    }
    for l in &dec.loops {
        for &i in &l.dimers {
            class[i as usize] = Some(Class::Loop);
        }
    }
    for p in &dec.paths {
        for &i in &p.dimers {
            class[i as usize] = Some(Class::Path);
        }
    }
    let width = (0.35 * s).max(0.5);
    let _ = writeln!(out, r#"<g stroke-width="{width:.2}" stroke-linecap="round">"#);
    for (d, cl) in sq.dimers.iter().zip(&class) {
        let color = match (opts.color, cl) {
            (ColorBy::Class, Some(Class::Double)) => DOUBLE,
            (ColorBy::Class, Some(Class::Loop)) => LOOP,
            (ColorBy::Class, Some(Class::Path)) => PATH,
            _ => "black",
        };
        let (ax, ay) = px(d.from);
        let (bx, by) = px(d.to);
        let _ = writeln!(out, r#"<line x1="{ax:.2}" y1="{ay:.2}" x2="{bx:.2}" y2="{by:.2}" stroke="{color}"/>"#);
    }
    let _ = writeln!(out, "</g>");

    if opts.mirrors && !dec.mirrors.is_empty() {
        let _ = writeln!(out, r#"<g stroke="{MIRROR}" stroke-width="{width:.2}" stroke-dasharray="{:.2}">"#, 0.5 * s);
        for m in &dec.mirrors {
            let (f1, f2) = m.faces();
            // from halfway towards one mirror face to halfway towards the other
            let mid = |f: Pt| pxf(0.5 * (m.at.0 + f.0) as f64, 0.5 * (m.at.1 + f.1) as f64);
            let (ax, ay) = mid(f1);
            let (bx, by) = mid(f2);
            let _ = writeln!(out, r#"<line x1="{ax:.2}" y1="{ay:.2}" x2="{bx:.2}" y2="{by:.2}"/>"#);
        }
        let _ = writeln!(out, "</g>");
    }
    out.push_str("</svg>\n");
    out
}
