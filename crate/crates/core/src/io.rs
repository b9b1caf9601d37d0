//! Artifact output: JSON and CSV with floats at 17 significant digits, each
//! stamped with the configuration hash of the run that produced it.

use crate::error::Result;
use crate::lattice::{dir_index, sub, Covering, Graph, Pt};
use crate::squish::{Decomposition, SquishedConfig};
use crate::trees::{DirectedForest, Root, TreeGraph};
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter, Serializer};
use std::io::{self, Write};
use std::path::Path;

/// `x` with 17 significant digits in scientific notation; non-finite values
/// become `NaN`, `inf`, `-inf`.
pub fn format_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Pretty JSON formatter that writes every float with 17 significant digits.
struct Sig17<'a>(PrettyFormatter<'a>);

impl Formatter for Sig17<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(format_f64(value).as_bytes())
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Pretty JSON with 17-digit floats. Non-finite floats serialize as `null`.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = Serializer::with_formatter(&mut out, Sig17(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    out.push(b'\n');
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}

/// Top-level wrapper written to every JSON artifact.
#[derive(Serialize)]
pub struct Stamped<'a, T: Serialize + ?Sized> {
    pub config_hash: &'a str,
    pub kind: &'a str,
    pub data: &'a T,
}

pub fn stamped_json<T: Serialize + ?Sized>(config_hash: &str, kind: &str, data: &T) -> Result<String> {
    to_json(&Stamped { config_hash, kind, data })
}

/// CSV text: a `# config_hash=...` line, the header, then one row per record.
pub fn csv(config_hash: &str, header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut s = format!("# config_hash={config_hash}\n{}\n", header.join(","));
    for r in rows {
        let cells: Vec<String> = r.iter().map(|&x| format_f64(x)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

/// Write `contents` to `path` through a sibling temporary file and a rename,
/// so a reader never sees a partial artifact.
pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeExport {
    pub white: Pt,
    pub black: Pt,
    pub weight: f64,
}

/// A graph with explicit coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphExport {
    pub whites: Vec<Pt>,
    pub blacks: Vec<Pt>,
    pub edges: Vec<EdgeExport>,
}

pub fn export_graph(g: &Graph) -> GraphExport {
    let r = &g.region;
    GraphExport {
        whites: r.whites.clone(),
        blacks: r.blacks.clone(),
        edges: g
            .edges
            .iter()
            .map(|e| EdgeExport { white: r.whites[e.white as usize], black: r.blacks[e.black as usize], weight: e.weight })
            .collect(),
    }
}

/// A dimer covering as a list of covered edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoveringExport {
    pub seed: Option<u64>,
    pub weight: f64,
    pub dimers: Vec<EdgeExport>,
}

pub fn export_covering(g: &Graph, cov: &Covering) -> CoveringExport {
    let r = &g.region;
    let dimers = cov
        .black_to_white
        .iter()
        .enumerate()
        .map(|(bi, &wi)| {
            let (w, b) = (r.whites[wi as usize], r.blacks[bi]);
            let weight = dir_index(sub(b, w))
                .and_then(|d| g.edge_at(wi as usize, d))
                .map_or(f64::NAN, |e| g.edges[e].weight);
            EdgeExport { white: w, black: b, weight }
        })
        .collect();
    CoveringExport { seed: cov.seed, weight: g.covering_weight(cov), dimers }
}

/// Rebuild a covering from its export; fails on edges absent from `g`.
pub fn import_covering(g: &Graph, ex: &CoveringExport) -> Result<Covering> {
    let r = &g.region;
    let mut b2w = vec![u32::MAX; r.blacks.len()];
    for d in &ex.dimers {
        let (Some(wi), Some(bi)) = (r.white_index(d.white), r.black_index(d.black)) else {
            return Err(crate::Error::InvalidCovering(format!("edge {:?}-{:?} not in the graph", d.white, d.black)));
        };
        b2w[bi] = wi as u32;
    }
    let cov = Covering { black_to_white: b2w, seed: ex.seed };
    cov.validate(r)?;
    Ok(cov)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopExport {
    /// b-faces of the cycle in traversal order.
    pub vertices: Vec<Pt>,
    pub sign: i8,
}

/// Squished-graph decomposition: b-faces are the vertices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionExport {
    /// Endpoints of each doubled squished edge.
    pub double_edges: Vec<(Pt, Pt)>,
    pub loops: Vec<LoopExport>,
    pub paths: Vec<Vec<Pt>>,
    /// Meeting points with their mirror a-faces.
    pub mirrors: Vec<(Pt, (Pt, Pt))>,
}

pub fn export_decomposition(sq: &SquishedConfig, dec: &Decomposition) -> DecompositionExport {
    DecompositionExport {
        double_edges: dec
            .double_edges
            .iter()
            .map(|&(i, _)| {
                let d = &sq.dimers[i as usize];
                (d.from, d.to)
            })
            .collect(),
        loops: dec.loops.iter().map(|l| LoopExport { vertices: l.bfaces.clone(), sign: l.sign }).collect(),
        paths: dec.paths.iter().map(|p| p.bfaces.clone()).collect(),
        mirrors: dec.mirrors.iter().map(|m| (m.at, m.faces())).collect(),
    }
}

/// A forest as parent pointers; `parent = None` points at the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestExport {
    pub root: Option<Pt>,
    pub parents: Vec<(Pt, Option<Pt>)>,
}

pub fn export_forest(f: &DirectedForest, tg: &TreeGraph) -> ForestExport {
    ForestExport {
        root: match f.root {
            Root::Wired => None,
            Root::Vertex(p) => Some(p),
        },
        parents: f.vertices.iter().copied().zip(f.parents(tg)).collect(),
    }
}
