//! Model files: structured-text (JSON, UTF-8) descriptions of degenerations.
//!
//! A model file either names a registered family by type and parameters,
//!
//! ```json
//! {"type": "local_snc", "n": 1, "m": [1, 1], "nu": [1, 1], "unit": "1"}
//! {"type": "hesse"}
//! ```
//!
//! or spells out the combinatorics explicitly,
//!
//! ```json
//! {"n": 1,
//!  "components": [{"id": 1, "m": 1, "nu": 1}, ...],
//!  "strata": [[1, 2], [2, 3], ...]}
//! ```
//!
//! An optional `"ivy"` block assigns, per submaximal face (keyed by its
//! comma-separated component ids), either `"canonical"` or an explicit
//! `{"vertices": [levels], "edges": [{"ends": [..], "levels": [lo, hi]}]}`
//! record; an optional `"zero_end"` block overrides the orientation of
//! canonical ivies. Loading rejects invariant violations with line-precise
//! messages.

use std::collections::BTreeSet;
use std::path::Path;

use serde_json::Value;

use crate::base::{ivy_from_data, IvyChoice, IvyEdge, IvyEnd, IvyGraph};
use crate::dual_complex::{models, Component, Face, SncDegeneration};
use crate::error::{Error, Result};
use crate::hybrid::Model;

/// A model file resolved into its combinatorial and, when the family has a
/// chart atlas, geometric forms.
#[derive(Clone, Debug)]
pub struct LoadedModel {
    /// Registry key of the model (type plus parameters).
    pub name: String,
    /// Combinatorial degeneration driving the skeleton modules.
    pub degeneration: SncDegeneration,
    /// Per-submaximal-face ivy choices for the expanded skeleton.
    pub ivy: IvyChoice,
    /// Geometric charts, for families with a registered atlas.
    pub geometry: Option<Model>,
}

/// Loads and validates a model file from disk.
pub fn load_model(path: &Path) -> Result<LoadedModel> {
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
        path: shown.clone(),
        line: 0,
        message: format!("cannot read file: {e}"),
    })?;
    parse_model(&text, &shown)
}

/// Parses and validates model-file text. `path` is used in error messages.
pub fn parse_model(text: &str, path: &str) -> Result<LoadedModel> {
    let src = Src { path, text };
    let root: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_string(),
        line: e.line(),
        message: format!("invalid syntax: {e}"),
    })?;
    let root = root
        .as_object()
        .ok_or_else(|| src.err(1, "top level must be an object".into()))?;

    let kind =
        match root.get("type") {
            None => None,
            Some(v) => Some(v.as_str().ok_or_else(|| {
                src.err(src.line_of_key("type"), "`type` must be a string".into())
            })?),
        };

    let (name, degeneration, geometry) = match kind {
        Some("hesse") => ("hesse".to_string(), models::hesse(), Some(Model::hesse())),
        Some("local_snc") => {
            let line = src.line_of_key("type");
            if let Some(unit) = root.get("unit") {
                if unit.as_str() != Some("1") {
                    return Err(src.err(
                        src.line_of_key("unit"),
                        "only `unit: \"1\"` is supported".into(),
                    ));
                }
            }
            let n = read_n(&src, root)?;
            let m = read_u32_array(&src, root, "m", n + 1)?;
            let nu = read_u32_array(&src, root, "nu", n + 1)?;
            if let Some(bad) = m.iter().position(|&v| v == 0) {
                return Err(src.err(
                    src.line_of_key("m"),
                    format!("multiplicity m[{bad}] must be positive"),
                ));
            }
            let geometry = Model::local_snc(n, m.clone(), nu.clone())
                .map_err(|e| src.err(line, format!("invalid local_snc parameters: {e}")))?;
            (
                format!("local_snc n={n} m={m:?} nu={nu:?}"),
                models::local_snc(n, &m, &nu),
                Some(geometry),
            )
        }
        Some(other) => {
            return Err(src.err(
                src.line_of_key("type"),
                format!("unknown model type `{other}` (expected `hesse` or `local_snc`)"),
            ));
        }
        None => {
            let n = read_n(&src, root)?;
            let components = read_components(&src, root)?;
            let strata = read_strata(&src, root, &components)?;
            let borrowed: Vec<&[u32]> = strata.iter().map(|s| s.as_slice()).collect();
            let degeneration = SncDegeneration::new(n, components, &borrowed)
                .map_err(|e| src.err(src.line_of_key("strata"), format!("invalid model: {e}")))?;
            ("custom".to_string(), degeneration, None)
        }
    };

    let ivy = read_ivy(&src, root, &degeneration)?;
    Ok(LoadedModel {
        name,
        degeneration,
        ivy,
        geometry,
    })
}

// ---------------------------------------------------------------------------
// Field readers
// ---------------------------------------------------------------------------

struct Src<'a> {
    path: &'a str,
    text: &'a str,
}

impl Src<'_> {
    fn err(&self, line: usize, message: String) -> Error {
        Error::Parse {
            path: self.path.to_string(),
            line,
            message,
        }
    }

    /// 1-based line of the first occurrence of `"key"`; 1 if absent.
    fn line_of_key(&self, key: &str) -> usize {
        self.line_of_nth(&format!("\"{key}\""), 0)
    }

    /// 1-based line of the `nth` occurrence of `needle`; 1 if absent.
    fn line_of_nth(&self, needle: &str, nth: usize) -> usize {
        let mut from = 0;
        for _ in 0..=nth {
            match self.text[from..].find(needle) {
                Some(at) => from += at + needle.len(),
                None => return 1,
            }
        }
        1 + self.text[..from].bytes().filter(|&b| b == b'\n').count()
    }

    /// Line of the `k`-th entry of the `strata` array: the `(k+1)`-th `[`
    /// after the key (the first opens the outer array).
    fn line_of_stratum(&self, k: usize) -> usize {
        let key = "\"strata\"";
        let Some(start) = self.text.find(key) else {
            return 1;
        };
        let mut from = start + key.len();
        for _ in 0..=k + 1 {
            match self.text[from..].find('[') {
                Some(at) => from += at + 1,
                None => return self.line_of_key("strata"),
            }
        }
        1 + self.text[..from].bytes().filter(|&b| b == b'\n').count()
    }
}

fn read_n(src: &Src, root: &serde_json::Map<String, Value>) -> Result<usize> {
    let v = root
        .get("n")
        .ok_or_else(|| src.err(1, "missing required field `n`".into()))?;
    let line = src.line_of_key("n");
    let n = v
        .as_u64()
        .ok_or_else(|| src.err(line, "`n` must be a non-negative integer".into()))?;
    if n == 0 {
        return Err(src.err(line, "`n` must be positive".into()));
    }
    Ok(n as usize)
}

fn read_u32_array(
    src: &Src,
    root: &serde_json::Map<String, Value>,
    key: &str,
    len: usize,
) -> Result<Vec<u32>> {
    let line = src.line_of_key(key);
    let v = root
        .get(key)
        .ok_or_else(|| src.err(1, format!("missing required field `{key}`")))?;
    let arr = v
        .as_array()
        .ok_or_else(|| src.err(line, format!("`{key}` must be an array of integers")))?;
    if arr.len() != len {
        return Err(src.err(
            line,
            format!("`{key}` must have {len} entries, found {}", arr.len()),
        ));
    }
    arr.iter()
        .map(|x| {
            x.as_u64()
                .filter(|&u| u <= u32::MAX as u64)
                .map(|u| u as u32)
                .ok_or_else(|| src.err(line, format!("`{key}` entries must be small integers")))
        })
        .collect()
}

fn read_components(src: &Src, root: &serde_json::Map<String, Value>) -> Result<Vec<Component>> {
    let v = root
        .get("components")
        .ok_or_else(|| src.err(1, "missing required field `components`".into()))?;
    let arr = v.as_array().ok_or_else(|| {
        src.err(
            src.line_of_key("components"),
            "`components` must be an array".into(),
        )
    })?;
    let mut out = Vec::with_capacity(arr.len());
    let mut seen = BTreeSet::new();
    for (k, entry) in arr.iter().enumerate() {
        let line = src.line_of_nth("\"id\"", k);
        let obj = entry
            .as_object()
            .ok_or_else(|| src.err(line, format!("component {k} must be an object")))?;
        let field = |name: &str| -> Result<u32> {
            obj.get(name)
                .and_then(Value::as_u64)
                .filter(|&u| u <= u32::MAX as u64)
                .map(|u| u as u32)
                .ok_or_else(|| {
                    src.err(
                        line,
                        format!("component {k}: `{name}` must be a non-negative integer"),
                    )
                })
        };
        let c = Component {
            id: field("id")?,
            m: field("m")?,
            nu: field("nu")?,
        };
        if c.m == 0 {
            return Err(src.err(
                line,
                format!("component {}: multiplicity must be positive", c.id),
            ));
        }
        if !seen.insert(c.id) {
            return Err(src.err(line, format!("duplicate component id {}", c.id)));
        }
        out.push(c);
    }
    Ok(out)
}

fn read_strata(
    src: &Src,
    root: &serde_json::Map<String, Value>,
    components: &[Component],
) -> Result<Vec<Vec<u32>>> {
    let known: BTreeSet<u32> = components.iter().map(|c| c.id).collect();
    let v = root
        .get("strata")
        .ok_or_else(|| src.err(1, "missing required field `strata`".into()))?;
    let arr = v.as_array().ok_or_else(|| {
        src.err(
            src.line_of_key("strata"),
            "`strata` must be an array of id lists".into(),
        )
    })?;
    let mut out = Vec::with_capacity(arr.len());
    for (k, entry) in arr.iter().enumerate() {
        let line = src.line_of_stratum(k);
        let ids = entry.as_array().ok_or_else(|| {
            src.err(
                line,
                format!("stratum {k} must be an array of component ids"),
            )
        })?;
        let mut stratum = Vec::with_capacity(ids.len());
        for id in ids {
            let id = id
                .as_u64()
                .filter(|&u| u <= u32::MAX as u64)
                .map(|u| u as u32)
                .ok_or_else(|| src.err(line, format!("stratum {k}: ids must be small integers")))?;
            if !known.contains(&id) {
                return Err(src.err(
                    line,
                    format!("stratum {k} references unknown component id {id}"),
                ));
            }
            if stratum.contains(&id) {
                return Err(src.err(line, format!("stratum {k} repeats component id {id}")));
            }
            stratum.push(id);
        }
        if stratum.is_empty() {
            return Err(src.err(line, format!("stratum {k} is empty")));
        }
        out.push(stratum);
    }
    Ok(out)
}

fn read_ivy(
    src: &Src,
    root: &serde_json::Map<String, Value>,
    degeneration: &SncDegeneration,
) -> Result<IvyChoice> {
    let mut choice = IvyChoice::default();
    if let Some(v) = root.get("ivy") {
        let map = v
            .as_object()
            .ok_or_else(|| src.err(src.line_of_key("ivy"), "`ivy` must be an object".into()))?;
        for (key, value) in map {
            let line = src.line_of_nth(&format!("\"{key}\""), 0);
            let face = parse_face_key(src, line, key, degeneration)?;
            match value {
                Value::String(s) if s == "canonical" => {}
                Value::Object(obj) => {
                    let graph = parse_ivy_graph(src, line, obj)?;
                    choice.explicit.insert(face, graph);
                }
                _ => {
                    return Err(src.err(
                        line,
                        format!("ivy for face `{key}` must be \"canonical\" or an explicit record"),
                    ));
                }
            }
        }
    }
    if let Some(v) = root.get("zero_end") {
        let map = v.as_object().ok_or_else(|| {
            src.err(
                src.line_of_key("zero_end"),
                "`zero_end` must be an object".into(),
            )
        })?;
        for (key, value) in map {
            let line = src.line_of_nth(&format!("\"{key}\""), 0);
            let face = parse_face_key(src, line, key, degeneration)?;
            let ids = value.as_array().ok_or_else(|| {
                src.err(
                    line,
                    format!("zero_end for face `{key}` must be an id list"),
                )
            })?;
            let mut target: Face = BTreeSet::new();
            for id in ids {
                let id = id
                    .as_u64()
                    .filter(|&u| u <= u32::MAX as u64)
                    .ok_or_else(|| {
                        src.err(
                            line,
                            format!("zero_end for face `{key}`: ids must be small integers"),
                        )
                    })?;
                target.insert(id as u32);
            }
            if !degeneration.strata.contains(&target) {
                return Err(src.err(
                    line,
                    format!("zero_end for face `{key}` names a face that is not a stratum"),
                ));
            }
            choice.zero_end.insert(face, target);
        }
    }
    Ok(choice)
}

fn parse_face_key(
    src: &Src,
    line: usize,
    key: &str,
    degeneration: &SncDegeneration,
) -> Result<Face> {
    let mut face: Face = BTreeSet::new();
    for part in key.split(',') {
        let id: u32 = part.trim().parse().map_err(|_| {
            src.err(
                line,
                format!("face key `{key}` must be comma-separated component ids"),
            )
        })?;
        face.insert(id);
    }
    if !degeneration.strata.contains(&face) {
        return Err(src.err(
            line,
            format!("face key `{key}` does not name a stratum of the model"),
        ));
    }
    Ok(face)
}

fn parse_ivy_graph(
    src: &Src,
    line: usize,
    obj: &serde_json::Map<String, Value>,
) -> Result<IvyGraph> {
    let vertices: Vec<f64> = match obj.get("vertices") {
        None => Vec::new(),
        Some(v) => v
            .as_array()
            .ok_or_else(|| src.err(line, "ivy `vertices` must be an array of levels".into()))?
            .iter()
            .map(|x| {
                x.as_f64()
                    .ok_or_else(|| src.err(line, "ivy vertex levels must be numbers".into()))
            })
            .collect::<Result<_>>()?,
    };
    let edges_v = obj
        .get("edges")
        .and_then(Value::as_array)
        .ok_or_else(|| src.err(line, "ivy record needs an `edges` array".into()))?;
    let mut edges = Vec::with_capacity(edges_v.len());
    for (k, e) in edges_v.iter().enumerate() {
        let e = e
            .as_object()
            .ok_or_else(|| src.err(line, format!("ivy edge {k} must be an object")))?;
        let ends_v = e
            .get("ends")
            .and_then(Value::as_array)
            .filter(|a| a.len() == 2)
            .ok_or_else(|| src.err(line, format!("ivy edge {k} needs `ends: [lo, hi]`")))?;
        let mut ends = [IvyEnd::Open; 2];
        for (slot, end) in ends_v.iter().enumerate() {
            ends[slot] = match end {
                Value::String(s) if s == "open" => IvyEnd::Open,
                Value::Number(n) => {
                    let idx = n.as_u64().ok_or_else(|| {
                        src.err(
                            line,
                            format!("ivy edge {k}: vertex index must be an integer"),
                        )
                    })? as usize;
                    if idx >= vertices.len() {
                        return Err(src.err(
                            line,
                            format!("ivy edge {k} references vertex {idx} of {}", vertices.len()),
                        ));
                    }
                    IvyEnd::Vertex(idx)
                }
                _ => {
                    return Err(src.err(
                        line,
                        format!("ivy edge {k}: each end is \"open\" or a vertex index"),
                    ));
                }
            };
        }
        let levels_v = e
            .get("levels")
            .and_then(Value::as_array)
            .filter(|a| a.len() == 2)
            .ok_or_else(|| src.err(line, format!("ivy edge {k} needs `levels: [lo, hi]`")))?;
        let mut levels = [0.0; 2];
        for (slot, level) in levels_v.iter().enumerate() {
            levels[slot] = match level {
                Value::Number(n) => n.as_f64().unwrap_or(f64::NAN),
                Value::String(s) if s == "inf" => f64::INFINITY,
                _ => {
                    return Err(
                        src.err(line, format!("ivy edge {k}: levels are numbers or \"inf\""))
                    );
                }
            };
        }
        edges.push(IvyEdge { ends, levels });
    }
    ivy_from_data(vertices, edges).map_err(|e| src.err(line, format!("invalid ivy: {e}")))
}
