//! Placement artifacts and SVG rendering: one panel per canvas layer,
//! 10 drawing units per grid cell, module colors derived from name hashes.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{CanvasConfig, CanvasState, Env};
use crate::netlist::{content_hash, Netlist};
use crate::pipeline::Totals;
use crate::{Result, SgfError};

/// Drawing units per canvas cell.
pub const CELL_UNITS: usize = 10;
const PANEL_GAP: usize = 20;
const MARGIN: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedModule {
    pub name: String,
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

/// A (possibly partial) placement plus the metrics it achieved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub netlist: String,
    pub hash: String,
    pub canvas: [usize; 3],
    pub modules: Vec<PlacedModule>,
    pub metrics: Totals,
}

impl Placement {
    pub fn from_state(env: &Env, state: &CanvasState) -> Placement {
        let modules = state
            .placed_order()
            .iter()
            .take(state.t())
            .map(|&id| {
                let a = state.position(id).expect("placed module has a position");
                PlacedModule {
                    name: env.netlist().modules[id].name.clone(),
                    x: a.x,
                    y: a.y,
                    z: a.z,
                }
            })
            .collect();
        let cfg = env.cfg();
        Placement {
            netlist: env.netlist().name.clone(),
            hash: content_hash(env.netlist()),
            canvas: [cfg.w, cfg.h, cfg.z],
            modules,
            metrics: Totals {
                wirelength: state.wirelength(),
                max_congestion: state.max_congestion(),
                max_heat: state.max_heat(),
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("placement serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Placement> {
        serde_json::from_str(text).map_err(|e| SgfError::Invalid(format!("placement: {e}")))
    }
}

/// Deterministic fill color for a module name.
fn color_of(name: &str) -> String {
    let digest = Sha256::digest(name.as_bytes());
    let hue = u32::from(digest[0]) as f64 / 255.0 * 360.0;
    let sat = 45.0 + u32::from(digest[1]) as f64 / 255.0 * 30.0;
    let light = 60.0 + u32::from(digest[2]) as f64 / 255.0 * 20.0;
    format!("hsl({hue:.0},{sat:.0}%,{light:.0}%)")
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// Render a placement as an SVG floorplan, one panel per layer, left to
/// right. Refuses placements that are out of bounds, overlapping, or that
/// reference unknown module names.
pub fn render_svg(
    placement: &Placement,
    netlist: &Netlist,
    cfg: &CanvasConfig,
) -> Result<String> {
    // Legality check: rebuild the occupancy grid cell by cell.
    let mut occupancy = vec![false; cfg.cells()];
    let mut seen = std::collections::BTreeSet::new();
    for pm in &placement.modules {
        let module = netlist
            .modules
            .iter()
            .find(|m| m.name == pm.name)
            .ok_or_else(|| SgfError::Invalid(format!("unknown module {:?}", pm.name)))?;
        if !seen.insert(&pm.name) {
            return Err(SgfError::Invalid(format!("module {:?} placed twice", pm.name)));
        }
        if pm.z >= cfg.z || pm.x + module.width > cfg.w || pm.y + module.height > cfg.h {
            return Err(SgfError::Invalid(format!(
                "module {:?} at ({},{},{}) exceeds the {}x{}x{} canvas",
                pm.name, pm.x, pm.y, pm.z, cfg.w, cfg.h, cfg.z
            )));
        }
        for y in pm.y..pm.y + module.height {
            for x in pm.x..pm.x + module.width {
                let idx = (pm.z * cfg.h + y) * cfg.w + x;
                if occupancy[idx] {
                    return Err(SgfError::Invalid(format!(
                        "module {:?} overlaps a previously placed module",
                        pm.name
                    )));
                }
                occupancy[idx] = true;
            }
        }
    }

    let pw = cfg.w * CELL_UNITS;
    let ph = cfg.h * CELL_UNITS;
    let total_w = 2 * MARGIN + cfg.z * pw + (cfg.z - 1) * PANEL_GAP;
    let total_h = 2 * MARGIN + ph + 16;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{total_w}\" height=\"{total_h}\" \
         viewBox=\"0 0 {total_w} {total_h}\">\n"
    ));
    for z in 0..cfg.z {
        let ox = MARGIN + z * (pw + PANEL_GAP);
        let oy = MARGIN;
        svg.push_str(&format!(
            "  <g class=\"layer\">\n    <rect x=\"{ox}\" y=\"{oy}\" width=\"{pw}\" \
             height=\"{ph}\" fill=\"white\" stroke=\"#333\" stroke-width=\"1\"/>\n"
        ));
        for pm in placement.modules.iter().filter(|pm| pm.z == z) {
            let module =
                netlist.modules.iter().find(|m| m.name == pm.name).expect("checked above");
            let x = ox + pm.x * CELL_UNITS;
            let y = oy + pm.y * CELL_UNITS;
            let w = module.width * CELL_UNITS;
            let h = module.height * CELL_UNITS;
            svg.push_str(&format!(
                "    <rect class=\"module\" x=\"{x}\" y=\"{y}\" width=\"{w}\" height=\"{h}\" \
                 fill=\"{}\" stroke=\"#222\" stroke-width=\"1\"/>\n",
                color_of(&pm.name)
            ));
            svg.push_str(&format!(
                "    <text x=\"{}\" y=\"{}\" font-size=\"8\" text-anchor=\"middle\" \
                 dominant-baseline=\"central\" font-family=\"monospace\">{}</text>\n",
                x + w / 2,
                y + h / 2,
                xml_escape(&pm.name)
            ));
        }
        svg.push_str(&format!(
            "    <text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\" \
             font-family=\"monospace\">layer {z}</text>\n  </g>\n",
            ox + pw / 2,
            oy + ph + 12
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Anchor;
    use crate::netlist::parse_canonical;

    fn toy() -> (Netlist, CanvasConfig) {
        let n = parse_canonical(
            r#"{"name":"toy3","modules":[{"name":"A","w":2,"h":2},{"name":"B","w":2,"h":1},{"name":"C","w":1,"h":1}],"nets":[["A","B"],["B","C"],["A","B"]]}"#,
        )
        .unwrap();
        (n, CanvasConfig::new(6, 6, 2).unwrap())
    }

    fn place(entries: &[(&str, usize, usize, usize)]) -> Placement {
        Placement {
            netlist: "toy3".into(),
            hash: String::new(),
            canvas: [6, 6, 2],
            modules: entries
                .iter()
                .map(|&(n, x, y, z)| PlacedModule { name: n.into(), x, y, z })
                .collect(),
            metrics: Totals { wirelength: 0.0, max_congestion: 0.0, max_heat: 0.0 },
        }
    }

    /// Minimal well-formedness check: every open tag closes in order.
    fn assert_well_formed(xml: &str) {
        let mut stack: Vec<String> = Vec::new();
        let mut rest = xml;
        while let Some(start) = rest.find('<') {
            let end = rest[start..].find('>').expect("unclosed tag") + start;
            let tag = &rest[start + 1..end];
            rest = &rest[end + 1..];
            if tag.starts_with('?') || tag.starts_with('!') {
                continue;
            }
            if let Some(name) = tag.strip_prefix('/') {
                assert_eq!(stack.pop().as_deref(), Some(name), "mismatched close");
            } else if !tag.ends_with('/') {
                let name = tag.split_whitespace().next().unwrap();
                stack.push(name.to_string());
            }
        }
        assert!(stack.is_empty(), "unclosed tags: {stack:?}");
        assert!(!rest.contains('>'), "stray closing bracket");
    }

    #[test]
    fn full_toy_placement_renders() {
        let (n, cfg) = toy();
        let p = place(&[("A", 0, 0, 0), ("B", 3, 0, 0), ("C", 0, 3, 1)]);
        let svg = render_svg(&p, &n, &cfg).unwrap();
        assert_well_formed(&svg);
        assert_eq!(svg.matches("class=\"module\"").count(), 3);
        assert_eq!(svg.matches("class=\"layer\"").count(), 2);
        assert!(svg.contains(">A</text>"));
        // 10 units per cell: module A is 2x2 cells.
        assert!(svg.contains("width=\"20\" height=\"20\""));
        // Deterministic output.
        assert_eq!(svg, render_svg(&p, &n, &cfg).unwrap());
    }

    #[test]
    fn empty_placement_gives_empty_panels() {
        let (n, cfg) = toy();
        let svg = render_svg(&place(&[]), &n, &cfg).unwrap();
        assert_well_formed(&svg);
        assert_eq!(svg.matches("class=\"module\"").count(), 0);
        assert_eq!(svg.matches("class=\"layer\"").count(), 2);
    }

    #[test]
    fn refuses_illegal_layouts() {
        let (n, cfg) = toy();
        // Overlap: B's row crosses A's footprint.
        let err = render_svg(&place(&[("A", 0, 0, 0), ("B", 1, 1, 0)]), &n, &cfg).unwrap_err();
        assert!(err.to_string().contains("overlaps"), "{err}");
        // Out of bounds.
        let err = render_svg(&place(&[("A", 5, 0, 0)]), &n, &cfg).unwrap_err();
        assert!(err.to_string().contains("exceeds"), "{err}");
        // Unknown name and duplicates.
        assert!(render_svg(&place(&[("Z", 0, 0, 0)]), &n, &cfg).is_err());
        let err =
            render_svg(&place(&[("C", 0, 0, 0), ("C", 2, 2, 0)]), &n, &cfg).unwrap_err();
        assert!(err.to_string().contains("twice"), "{err}");
    }

    #[test]
    fn colors_are_name_deterministic() {
        assert_eq!(color_of("A"), color_of("A"));
        assert_ne!(color_of("A"), color_of("B"));
    }

    #[test]
    fn placement_json_round_trip() {
        let p = place(&[("A", 0, 0, 0), ("B", 3, 0, 0)]);
        let back = Placement::from_json(&p.to_json()).unwrap();
        assert_eq!(back, p);
        assert!(Placement::from_json("{\"broken\":").is_err());
    }

    #[test]
    fn from_state_tracks_partial_placements() {
        let (n, cfg) = toy();
        let env = Env::new(n, cfg).unwrap();
        let s0 = env.reset();
        let (s1, _, _) = env.step(&s0, Anchor::new(0, 0, 0)).unwrap();
        let p = Placement::from_state(&env, &s1);
        assert_eq!(p.modules.len(), 1);
        assert_eq!(p.modules[0].name, "A");
        assert_eq!(p.canvas, [6, 6, 2]);
    }
}
