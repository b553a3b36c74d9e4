//! Netlist model and benchmark ingestion.
//!
//! Two input paths feed the same internal model: the canonical JSON format
//! (the engine's own interchange format) and read-only GSRC bookshelf
//! `.blocks`/`.nets` pairs. Geometry is cell-quantized on ingest; the
//! placement engine only ever sees integer footprints.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::CanvasConfig;
use crate::{Result, SgfError};

/// A rectangular hard module. Ids are dense `0..n_modules`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Module {
    pub id: usize,
    pub name: String,
    /// Footprint width in cells, >= 1.
    pub width: usize,
    /// Footprint height in cells, >= 1.
    pub height: usize,
}

impl Module {
    pub fn area(&self) -> usize {
        self.width * self.height
    }
}

/// A hyperedge over module ids. Duplicate pins are collapsed on ingest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Net {
    pub id: usize,
    pub pins: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Netlist {
    pub name: String,
    pub modules: Vec<Module>,
    pub nets: Vec<Net>,
}

/// Symmetric per-pair net counts with zero diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetCountMatrix {
    n: usize,
    m: Vec<u32>,
}

impl NetCountMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, a: usize, b: usize) -> u32 {
        self.m[a * self.n + b]
    }

    /// Number of distinct modules sharing at least one net with `a`.
    pub fn degree(&self, a: usize) -> usize {
        (0..self.n).filter(|&b| self.get(a, b) > 0).count()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n).map(|a| self.degree(a)).max().unwrap_or(0)
    }
}

/// Per-pair net counts: `m[a][b]` = number of nets containing both.
pub fn net_count_matrix(netlist: &Netlist) -> NetCountMatrix {
    let n = netlist.modules.len();
    let mut m = vec![0u32; n * n];
    for net in &netlist.nets {
        for (i, &a) in net.pins.iter().enumerate() {
            for &b in &net.pins[i + 1..] {
                m[a * n + b] += 1;
                m[b * n + a] += 1;
            }
        }
    }
    NetCountMatrix { n, m }
}

/// Structural problems found by [`validate`]. Violations are data, not
/// failures; an empty list means the netlist can be placed on `cfg`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub module: Option<String>,
    pub msg: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.module {
            Some(name) => write!(f, "{}: {}", name, self.msg),
            None => write!(f, "{}", self.msg),
        }
    }
}

pub fn validate(netlist: &Netlist, cfg: &CanvasConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    if netlist.modules.is_empty() {
        out.push(Violation { module: None, msg: "netlist has no modules".into() });
    }
    let mut seen = HashMap::new();
    for (i, module) in netlist.modules.iter().enumerate() {
        if module.id != i {
            out.push(Violation {
                module: Some(module.name.clone()),
                msg: format!("id {} out of order (expected {})", module.id, i),
            });
        }
        if module.width < 1 || module.height < 1 {
            out.push(Violation {
                module: Some(module.name.clone()),
                msg: "width and height must be >= 1".into(),
            });
        }
        if module.width > cfg.w || module.height > cfg.h {
            out.push(Violation {
                module: Some(module.name.clone()),
                msg: format!(
                    "footprint {}x{} does not fit {}x{} canvas",
                    module.width, module.height, cfg.w, cfg.h
                ),
            });
        }
        if let Some(prev) = seen.insert(module.name.clone(), i) {
            out.push(Violation {
                module: Some(module.name.clone()),
                msg: format!("duplicate module name (also id {prev})"),
            });
        }
    }
    for net in &netlist.nets {
        if net.pins.len() < 2 {
            out.push(Violation {
                module: None,
                msg: format!("net {} has fewer than 2 pins", net.id),
            });
        }
        for &pin in &net.pins {
            if pin >= netlist.modules.len() {
                out.push(Violation {
                    module: None,
                    msg: format!("net {} references unknown module id {}", net.id, pin),
                });
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Canonical JSON format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct CanonicalModule {
    name: String,
    w: usize,
    h: usize,
}

#[derive(Serialize, Deserialize)]
struct CanonicalNetlist {
    name: String,
    modules: Vec<CanonicalModule>,
    nets: Vec<Vec<String>>,
}

pub fn serialize_canonical(netlist: &Netlist) -> String {
    let doc = CanonicalNetlist {
        name: netlist.name.clone(),
        modules: netlist
            .modules
            .iter()
            .map(|m| CanonicalModule { name: m.name.clone(), w: m.width, h: m.height })
            .collect(),
        nets: netlist
            .nets
            .iter()
            .map(|net| net.pins.iter().map(|&p| netlist.modules[p].name.clone()).collect())
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("canonical netlist serialization")
}

pub fn parse_canonical(text: &str) -> Result<Netlist> {
    let doc: CanonicalNetlist =
        serde_json::from_str(text).map_err(|e| SgfError::Invalid(format!("netlist json: {e}")))?;
    let mut ids = HashMap::new();
    let mut modules = Vec::with_capacity(doc.modules.len());
    for (id, m) in doc.modules.into_iter().enumerate() {
        if m.w < 1 {
            return Err(SgfError::Invalid(format!("module {}: width must be >=1", m.name)));
        }
        if m.h < 1 {
            return Err(SgfError::Invalid(format!("module {}: height must be >=1", m.name)));
        }
        if ids.insert(m.name.clone(), id).is_some() {
            return Err(SgfError::Invalid(format!("duplicate module name {}", m.name)));
        }
        modules.push(Module { id, name: m.name, width: m.w, height: m.h });
    }
    if modules.is_empty() {
        return Err(SgfError::Invalid("netlist has no modules".into()));
    }
    let mut nets = Vec::new();
    for (id, pins) in doc.nets.into_iter().enumerate() {
        let mut resolved = BTreeSet::new();
        for name in &pins {
            let &pin = ids
                .get(name)
                .ok_or_else(|| SgfError::Invalid(format!("net {id}: unknown module {name}")))?;
            resolved.insert(pin);
        }
        if resolved.len() < 2 {
            return Err(SgfError::Invalid(format!("net {id}: fewer than 2 distinct pins")));
        }
        nets.push(Net { id, pins: resolved.into_iter().collect() });
    }
    Ok(Netlist { name: doc.name, modules, nets })
}

/// Content hash of the canonical serialization; identifies the netlist a
/// trajectory file was generated from.
pub fn content_hash(netlist: &Netlist) -> String {
    let digest = Sha256::digest(serialize_canonical(netlist).as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------------------
// GSRC bookshelf format
// ---------------------------------------------------------------------------

#[derive(Debug)]
struct RawBlock {
    name: String,
    w: f64,
    h: f64,
}

/// Parse a GSRC bookshelf `.blocks`/`.nets` pair.
///
/// Soft blocks are hardened at aspect ratio 1. Real-valued geometry is
/// downscaled (never upscaled) so the largest dimension fits
/// `max_dim_cells`, then rounded up to whole cells. Nets keep only module
/// pins; a net that retains fewer than two is dropped.
pub fn parse_gsrc(blocks_text: &str, nets_text: &str, max_dim_cells: usize) -> Result<Netlist> {
    let (raw_blocks, terminals) = parse_gsrc_blocks(blocks_text)?;
    if raw_blocks.is_empty() {
        return Err(SgfError::Invalid("blocks file declares no blocks".into()));
    }

    let max_raw = raw_blocks.iter().map(|b| b.w.max(b.h)).fold(0.0f64, f64::max);
    let scale = if max_raw > max_dim_cells as f64 { max_dim_cells as f64 / max_raw } else { 1.0 };
    let quantize = |v: f64| ((v * scale).ceil() as usize).max(1);

    let mut ids = HashMap::new();
    let mut modules = Vec::with_capacity(raw_blocks.len());
    for (id, raw) in raw_blocks.into_iter().enumerate() {
        if ids.insert(raw.name.clone(), id).is_some() {
            return Err(SgfError::Invalid(format!("duplicate block name {}", raw.name)));
        }
        modules.push(Module {
            id,
            name: raw.name,
            width: quantize(raw.w),
            height: quantize(raw.h),
        });
    }

    let nets = parse_gsrc_nets(nets_text, &ids, &terminals)?;
    Ok(Netlist { name: "gsrc".into(), modules, nets })
}

fn numbers_in(line: &str) -> Vec<f64> {
    let mut out = Vec::new();
    let cleaned: String =
        line.chars().map(|c| if c == '(' || c == ')' || c == ',' { ' ' } else { c }).collect();
    for tok in cleaned.split_whitespace() {
        if let Ok(v) = tok.parse::<f64>() {
            out.push(v);
        }
    }
    out
}

fn parse_gsrc_blocks(text: &str) -> Result<(Vec<RawBlock>, BTreeSet<String>)> {
    let mut blocks = Vec::new();
    let mut terminals = BTreeSet::new();
    let mut saw_header = false;
    for (idx, raw_line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.starts_with("UCLA") {
            saw_header = true;
            continue;
        }
        if line.starts_with("Num") {
            // NumSoftRectangularBlocks / NumHardRectilinearBlocks / NumTerminals
            if !line.contains(':') {
                return Err(SgfError::parse(lineno, format!("malformed header line: {line}")));
            }
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.get(1).copied() {
            Some("hardrectilinear") => {
                let corners: usize = tokens
                    .get(2)
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| SgfError::parse(lineno, "missing corner count"))?;
                if corners != 4 {
                    return Err(SgfError::parse(
                        lineno,
                        format!("non-rectangular outline with {corners} corners"),
                    ));
                }
                let rest = tokens[3..].join(" ");
                let nums = numbers_in(&rest);
                if nums.len() != 8 {
                    return Err(SgfError::parse(lineno, "expected 4 (x, y) corner pairs"));
                }
                let xs: Vec<f64> = nums.iter().step_by(2).copied().collect();
                let ys: Vec<f64> = nums.iter().skip(1).step_by(2).copied().collect();
                let (x0, x1) = (xs.iter().copied().fold(f64::MAX, f64::min), xs.iter().copied().fold(f64::MIN, f64::max));
                let (y0, y1) = (ys.iter().copied().fold(f64::MAX, f64::min), ys.iter().copied().fold(f64::MIN, f64::max));
                // The outline must be exactly the four bbox corners.
                for (&x, &y) in xs.iter().zip(&ys) {
                    if (x != x0 && x != x1) || (y != y0 && y != y1) {
                        return Err(SgfError::parse(lineno, "non-rectangular outline"));
                    }
                }
                if x1 <= x0 || y1 <= y0 {
                    return Err(SgfError::parse(lineno, "degenerate outline"));
                }
                blocks.push(RawBlock { name: tokens[0].to_string(), w: x1 - x0, h: y1 - y0 });
            }
            Some("softrectangular") => {
                let nums = numbers_in(&tokens[2..].join(" "));
                let area = *nums
                    .first()
                    .ok_or_else(|| SgfError::parse(lineno, "softrectangular: missing area"))?;
                if area <= 0.0 {
                    return Err(SgfError::parse(lineno, "softrectangular: area must be > 0"));
                }
                let side = area.sqrt();
                blocks.push(RawBlock { name: tokens[0].to_string(), w: side, h: side });
            }
            Some("terminal") => {
                terminals.insert(tokens[0].to_string());
            }
            _ => {
                return Err(SgfError::parse(lineno, format!("unrecognized block line: {line}")));
            }
        }
    }
    if !saw_header {
        return Err(SgfError::parse(1, "missing UCLA blocks header"));
    }
    Ok((blocks, terminals))
}

fn parse_gsrc_nets(
    text: &str,
    ids: &HashMap<String, usize>,
    terminals: &BTreeSet<String>,
) -> Result<Vec<Net>> {
    let mut nets = Vec::new();
    let mut current: Option<BTreeSet<usize>> = None;
    let flush = |current: &mut Option<BTreeSet<usize>>, nets: &mut Vec<Net>| {
        if let Some(pins) = current.take() {
            if pins.len() >= 2 {
                let id = nets.len();
                nets.push(Net { id, pins: pins.into_iter().collect() });
            }
        }
    };
    for (idx, raw_line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("UCLA") {
            continue;
        }
        if line.starts_with("NumNets") || line.starts_with("NumPins") {
            continue;
        }
        if line.starts_with("NetDegree") {
            flush(&mut current, &mut nets);
            current = Some(BTreeSet::new());
            continue;
        }
        let pin_name = line
            .split_whitespace()
            .next()
            .ok_or_else(|| SgfError::parse(lineno, "empty pin line"))?;
        let pins = current
            .as_mut()
            .ok_or_else(|| SgfError::parse(lineno, "pin line before any NetDegree"))?;
        if let Some(&id) = ids.get(pin_name) {
            pins.insert(id);
        } else if !terminals.contains(pin_name) {
            return Err(SgfError::parse(lineno, format!("unknown pin name {pin_name}")));
        }
        // Terminal pins are dropped; wirelength is defined between modules.
    }
    flush(&mut current, &mut nets);
    Ok(nets)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Fixed 3-module fixture used across the test suite.
    pub fn toy3() -> Netlist {
        parse_canonical(
            r#"{
                "name": "toy3",
                "modules": [
                    {"name": "A", "w": 2, "h": 2},
                    {"name": "B", "w": 2, "h": 1},
                    {"name": "C", "w": 1, "h": 1}
                ],
                "nets": [["A", "B"], ["B", "C"], ["A", "B"]]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn toy3_shape() {
        let n = toy3();
        assert_eq!(n.modules.len(), 3);
        assert_eq!(n.nets.len(), 3);
        assert_eq!(n.modules[0].area(), 4);
    }

    #[test]
    fn canonical_round_trip() {
        let n = toy3();
        let text = serialize_canonical(&n);
        assert_eq!(parse_canonical(&text).unwrap(), n);
    }

    #[test]
    fn zero_width_rejected() {
        let err = parse_canonical(
            r#"{"name":"x","modules":[{"name":"A","w":0,"h":1},{"name":"B","w":1,"h":1}],"nets":[["A","B"]]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("width must be >=1"), "{err}");
    }

    #[test]
    fn duplicate_name_rejected() {
        let err = parse_canonical(
            r#"{"name":"x","modules":[{"name":"A","w":1,"h":1},{"name":"A","w":1,"h":1}],"nets":[]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate module name"));
    }

    #[test]
    fn short_net_rejected() {
        let err = parse_canonical(
            r#"{"name":"x","modules":[{"name":"A","w":1,"h":1},{"name":"B","w":1,"h":1}],"nets":[["A","A"]]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("fewer than 2 distinct pins"));
    }

    #[test]
    fn net_counts_toy3() {
        let n = toy3();
        let m = net_count_matrix(&n);
        // Direct enumeration: nets {A,B}, {B,C}, {A,B}.
        assert_eq!(m.get(0, 1), 2);
        assert_eq!(m.get(1, 2), 1);
        assert_eq!(m.get(0, 2), 0);
        for a in 0..3 {
            assert_eq!(m.get(a, a), 0);
            for b in 0..3 {
                assert_eq!(m.get(a, b), m.get(b, a));
            }
        }
        assert_eq!(m.degree(1), 2);
    }

    #[test]
    fn net_counts_no_nets() {
        let mut n = toy3();
        n.nets.clear();
        let m = net_count_matrix(&n);
        for a in 0..3 {
            for b in 0..3 {
                assert_eq!(m.get(a, b), 0);
            }
        }
    }

    #[test]
    fn net_counts_single_clique() {
        let mut n = toy3();
        n.nets = vec![Net { id: 0, pins: vec![0, 1, 2] }];
        let m = net_count_matrix(&n);
        for a in 0..3 {
            for b in 0..3 {
                assert_eq!(m.get(a, b), u32::from(a != b));
            }
        }
    }

    #[test]
    fn validate_fit_and_duplicates() {
        let cfg = CanvasConfig::new(6, 6, 2).unwrap();
        let n = toy3();
        assert!(validate(&n, &cfg).is_empty());

        let mut wide = toy3();
        wide.modules[1].width = 7;
        let v = validate(&wide, &cfg);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].module.as_deref(), Some("B"));

        let mut dup = toy3();
        dup.modules[2].name = "A".into();
        let v = validate(&dup, &cfg);
        assert_eq!(v.len(), 1);
        assert!(v[0].msg.contains("duplicate"));
    }

    const BLOCKS_2: &str = "\
UCLA blocks 1.0
NumSoftRectangularBlocks : 0
NumHardRectilinearBlocks : 2
NumTerminals : 1
blk0 hardrectilinear 4 (0, 0) (0, 4) (4, 4) (4, 0)
blk1 hardrectilinear 4 (0, 0) (0, 2) (2, 2) (2, 0)
p1 terminal
";

    #[test]
    fn gsrc_two_blocks() {
        let nets = "\
UCLA nets 1.0
NumNets : 1
NumPins : 2
NetDegree : 2
blk0 B
blk1 B
";
        let n = parse_gsrc(BLOCKS_2, nets, 12).unwrap();
        assert_eq!(n.modules.len(), 2);
        assert_eq!((n.modules[0].width, n.modules[0].height), (4, 4));
        assert_eq!((n.modules[1].width, n.modules[1].height), (2, 2));
        assert_eq!(n.nets.len(), 1);
        assert_eq!(n.nets[0].pins.len(), 2);
    }

    #[test]
    fn gsrc_pad_only_net_dropped() {
        let nets = "\
UCLA nets 1.0
NumNets : 1
NumPins : 2
NetDegree : 2
blk0 B
p1 B
";
        let n = parse_gsrc(BLOCKS_2, nets, 12).unwrap();
        assert_eq!(n.nets.len(), 0);
    }

    #[test]
    fn gsrc_unknown_pin_rejected() {
        let nets = "\
UCLA nets 1.0
NetDegree : 2
blk0 B
ghost B
";
        let err = parse_gsrc(BLOCKS_2, nets, 12).unwrap_err();
        assert!(err.to_string().contains("unknown pin name ghost"), "{err}");
    }

    #[test]
    fn gsrc_non_rectangular_rejected() {
        let blocks = "\
UCLA blocks 1.0
NumHardRectilinearBlocks : 1
blk0 hardrectilinear 4 (0, 0) (0, 4) (4, 4) (3, 1)
";
        let err = parse_gsrc(blocks, "UCLA nets 1.0\n", 12).unwrap_err();
        match err {
            SgfError::Parse { line, ref msg } => {
                assert_eq!(line, 3);
                assert!(msg.contains("non-rectangular"));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn gsrc_downscales_large_geometry() {
        let blocks = "\
UCLA blocks 1.0
NumHardRectilinearBlocks : 2
big hardrectilinear 4 (0, 0) (0, 120) (240, 120) (240, 0)
small hardrectilinear 4 (0, 0) (0, 30) (60, 30) (60, 0)
";
        let n = parse_gsrc(blocks, "UCLA nets 1.0\n", 12).unwrap();
        // scale = 12/240; dimensions round up, floor 1 cell.
        assert_eq!((n.modules[0].width, n.modules[0].height), (12, 6));
        assert_eq!((n.modules[1].width, n.modules[1].height), (3, 2));
    }

    #[test]
    fn gsrc_soft_block_aspect_one() {
        let blocks = "\
UCLA blocks 1.0
NumSoftRectangularBlocks : 1
sb0 softrectangular 9.0 0.5 2.0
";
        let n = parse_gsrc(blocks, "UCLA nets 1.0\n", 12).unwrap();
        assert_eq!((n.modules[0].width, n.modules[0].height), (3, 3));
    }
}
