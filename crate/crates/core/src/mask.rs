//! Graph-to-layer mask mapping.
//!
//! Every prunable layer splits its input and output units (neurons or
//! channels) into `n` contiguous groups, one per graph node. Output group `j`
//! keeps its weights from input group `i` iff `i` is a neighbor of `j`. The
//! same graph drives every prunable layer of a model.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{AdjacencyGraph, GraphError, RegularGraph, Topology};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("layer {layer:?}: width {width} is smaller than the {n} graph nodes")]
    TooFewUnits { layer: String, width: usize, n: usize },
    #[error("layer {0:?} has no output spatial size")]
    MissingSpatialDims(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported mask schema version {0}, expected {SCHEMA_VERSION}")]
    SchemaVersionMismatch(u64),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MaskError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    #[serde(rename = "fc")]
    FullyConnected,
    #[serde(rename = "conv")]
    Conv,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    #[serde(rename = "in")]
    pub in_width: usize,
    #[serde(rename = "out")]
    pub out_width: usize,
    /// Spatial kernel elements per (out, in) channel pair; 1 for FC.
    #[serde(default = "one")]
    pub kernel_elems: usize,
    #[serde(default = "yes")]
    pub prunable: bool,
    #[serde(default = "yes")]
    pub bias: bool,
    /// Output feature-map height and width (conv only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_hw: Option<[usize; 2]>,
    /// Side branch (e.g. a residual projection): exempt from width chaining.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub branch: bool,
}

impl LayerSpec {
    pub fn fc(name: &str, in_width: usize, out_width: usize) -> Self {
        Self {
            name: name.into(),
            kind: LayerKind::FullyConnected,
            in_width,
            out_width,
            kernel_elems: 1,
            prunable: true,
            bias: true,
            out_hw: None,
            branch: false,
        }
    }

    pub fn conv(name: &str, in_width: usize, out_width: usize, kernel_elems: usize, out_hw: [usize; 2]) -> Self {
        Self { kind: LayerKind::Conv, kernel_elems, out_hw: Some(out_hw), ..Self::fc(name, in_width, out_width) }
    }

    pub fn dense(mut self) -> Self {
        self.prunable = false;
        self
    }

    pub fn weight_count(&self) -> u64 {
        (self.in_width * self.out_width * self.kernel_elems) as u64
    }

    pub fn bias_count(&self) -> u64 {
        if self.bias {
            self.out_width as u64
        } else {
            0
        }
    }

    fn validate(&self) -> Result<()> {
        if self.in_width == 0 || self.out_width == 0 || self.kernel_elems == 0 {
            return Err(MaskError::InvalidModel(format!("layer {:?} has a zero dimension", self.name)));
        }
        if self.kind == LayerKind::FullyConnected && self.kernel_elems != 1 {
            return Err(MaskError::InvalidModel(format!(
                "fully connected layer {:?} must have kernel_elems = 1",
                self.name
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        let m = Self { layers };
        m.validate()?;
        Ok(m)
    }

    /// Checks dimensions and that each non-branch layer consumes what the
    /// previous non-branch layer produces.
    pub fn validate(&self) -> Result<()> {
        let mut prev: Option<&LayerSpec> = None;
        for layer in &self.layers {
            layer.validate()?;
            if layer.branch {
                continue;
            }
            if let Some(p) = prev {
                if p.out_width != layer.in_width {
                    return Err(MaskError::InvalidModel(format!(
                        "layer {:?} expects {} inputs but {:?} produces {}",
                        layer.name, layer.in_width, p.name, p.out_width
                    )));
                }
            }
            prev = Some(layer);
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text).map_err(|e| MaskError::Parse(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Output `H*W` per layer: 1 for FC, from `out_hw` for conv.
    pub fn spatial_dims(&self) -> Result<Vec<usize>> {
        self.layers
            .iter()
            .map(|l| match (l.kind, l.out_hw) {
                (LayerKind::FullyConnected, _) => Ok(1),
                (LayerKind::Conv, Some([h, w])) => Ok(h * w),
                (LayerKind::Conv, None) => Err(MaskError::MissingSpatialDims(l.name.clone())),
            })
            .collect()
    }
}

/// Bundled model specs with CIFAR-sized layer widths.
pub mod bundled {
    use super::ModelSpec;

    pub const VGG16_CIFAR: &str = include_str!("../models/vgg16_cifar.json");
    pub const RESNET18_CIFAR: &str = include_str!("../models/resnet18_cifar.json");

    pub fn vgg16_cifar() -> ModelSpec {
        ModelSpec::from_json(VGG16_CIFAR).expect("bundled spec is valid")
    }

    pub fn resnet18_cifar() -> ModelSpec {
        ModelSpec::from_json(RESNET18_CIFAR).expect("bundled spec is valid")
    }

    pub fn by_name(name: &str) -> Option<ModelSpec> {
        match name {
            "vgg16" | "vgg16_cifar" => Some(vgg16_cifar()),
            "resnet18" | "resnet18_cifar" => Some(resnet18_cifar()),
            _ => None,
        }
    }
}

/// Contiguous split of `width` units into groups.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub width: usize,
    /// `groups + 1` cut points from 0 to `width`.
    pub bounds: Vec<usize>,
}

impl Partition {
    pub fn groups(&self) -> usize {
        self.bounds.len() - 1
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.bounds.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn range(&self, group: usize) -> std::ops::Range<usize> {
        self.bounds[group]..self.bounds[group + 1]
    }

    pub fn group_of(&self, unit: usize) -> usize {
        self.bounds.partition_point(|&b| b <= unit) - 1
    }

    fn from_bounds(width: usize, bounds: Vec<usize>) -> Result<Self> {
        let ok = bounds.len() >= 2
            && bounds[0] == 0
            && *bounds.last().unwrap() == width
            && bounds.windows(2).all(|w| w[0] < w[1]);
        if !ok {
            return Err(MaskError::Parse(format!("bounds {bounds:?} do not partition 0..{width}")));
        }
        Ok(Self { width, bounds })
    }
}

/// Splits `width` units into `n` groups. Leading groups take `ceil(width/n)`
/// units and the last group takes the remainder. When that would leave the
/// last group empty (e.g. 65 units into 64 groups) the split falls back to
/// sizes differing by at most one, larger groups first.
pub fn partition(width: usize, n: usize) -> Result<Partition> {
    if n == 0 || width < n {
        return Err(MaskError::TooFewUnits { layer: String::new(), width, n });
    }
    let lead = width.div_ceil(n);
    let sizes: Vec<usize> = if (n - 1) * lead < width {
        let mut s = vec![lead; n - 1];
        s.push(width - (n - 1) * lead);
        s
    } else {
        let (base, extra) = (width / n, width % n);
        (0..n).map(|i| base + usize::from(i < extra)).collect()
    };
    let mut bounds = Vec::with_capacity(n + 1);
    bounds.push(0);
    for s in sizes {
        bounds.push(bounds.last().unwrap() + s);
    }
    Ok(Partition { width, bounds })
}

/// Block-level mask of one layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerMask {
    pub spec: LayerSpec,
    pub in_part: Partition,
    pub out_part: Partition,
    /// Row-major `out_groups x in_groups` block predicate.
    allowed: Vec<bool>,
}

impl LayerMask {
    pub fn prunable(&self) -> bool {
        self.spec.prunable
    }

    pub fn block_allowed(&self, out_group: usize, in_group: usize) -> bool {
        self.allowed[out_group * self.in_part.groups() + in_group]
    }

    pub fn allowed_blocks(&self) -> usize {
        self.allowed.iter().filter(|&&a| a).count()
    }

    /// Input groups feeding `out_group`, ascending.
    pub fn inputs_of(&self, out_group: usize) -> Vec<usize> {
        (0..self.in_part.groups()).filter(|&i| self.block_allowed(out_group, i)).collect()
    }

    /// Unit-level mask, row-major `out_width x in_width`. Kernel elements of a
    /// kept (out, in) pair are all kept.
    pub fn unit_mask(&self) -> Vec<bool> {
        let (rows, cols) = (self.spec.out_width, self.spec.in_width);
        let col_group: Vec<usize> = (0..cols).map(|c| self.in_part.group_of(c)).collect();
        let mut mask = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let g = self.out_part.group_of(r);
            mask.extend(col_group.iter().map(|&cg| self.block_allowed(g, cg)));
        }
        mask
    }

    pub fn surviving_weights(&self) -> u64 {
        let out_sizes = self.out_part.sizes();
        let in_sizes = self.in_part.sizes();
        let mut kept = 0u64;
        for (j, &os) in out_sizes.iter().enumerate() {
            for (i, &is) in in_sizes.iter().enumerate() {
                if self.block_allowed(j, i) {
                    kept += (os * is) as u64;
                }
            }
        }
        kept * self.spec.kernel_elems as u64
    }

    pub fn density(&self) -> f64 {
        self.surviving_weights() as f64 / self.spec.weight_count() as f64
    }
}

/// Maps one layer through the graph. Non-prunable layers get a single
/// all-allowed block.
pub fn layer_mask<G: Topology + ?Sized>(g: &G, layer: &LayerSpec) -> Result<LayerMask> {
    if !layer.prunable {
        return Ok(LayerMask {
            spec: layer.clone(),
            in_part: Partition { width: layer.in_width, bounds: vec![0, layer.in_width] },
            out_part: Partition { width: layer.out_width, bounds: vec![0, layer.out_width] },
            allowed: vec![true],
        });
    }
    let n = g.order();
    let named = |e| match e {
        MaskError::TooFewUnits { width, n, .. } => MaskError::TooFewUnits { layer: layer.name.clone(), width, n },
        other => other,
    };
    let in_part = partition(layer.in_width, n).map_err(named)?;
    let out_part = partition(layer.out_width, n).map_err(named)?;
    let mut allowed = vec![false; n * n];
    for j in 0..n {
        for &i in g.neighbors(j) {
            allowed[j * n + i] = true;
        }
    }
    Ok(LayerMask { spec: layer.clone(), in_part, out_part, allowed })
}

/// Per-layer masks of a whole model, all driven by one graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskSet {
    pub graph: AdjacencyGraph,
    /// Uniform degree of `graph` (self-loops count once).
    pub k: usize,
    pub layers: Vec<LayerMask>,
}

impl MaskSet {
    fn build(graph: AdjacencyGraph, model: &ModelSpec) -> Result<Self> {
        model.validate()?;
        let k = graph
            .uniform_degree()
            .ok_or_else(|| MaskError::InvalidModel("mask graph must be regular".into()))?;
        let layers = model.layers.iter().map(|l| layer_mask(&graph, l)).collect::<Result<_>>()?;
        Ok(Self { graph, k, layers })
    }

    pub fn n(&self) -> usize {
        self.graph.order()
    }

    pub fn dense_layers(&self) -> Vec<&str> {
        self.layers.iter().filter(|l| !l.prunable()).map(|l| l.spec.name.as_str()).collect()
    }

    pub fn layer(&self, name: &str) -> Option<&LayerMask> {
        self.layers.iter().find(|l| l.spec.name == name)
    }
}

pub fn model_masks(g: &RegularGraph, model: &ModelSpec) -> Result<MaskSet> {
    MaskSet::build(g.as_adjacency().clone(), model)
}

/// The unpruned mapping: complete graph with self-loops on `n` nodes.
pub fn dense_masks(n: usize, model: &ModelSpec) -> Result<MaskSet> {
    MaskSet::build(AdjacencyGraph::complete_with_self_loops(n), model)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionStats {
    pub params_orig: u64,
    pub params_pruned: u64,
    pub flops_orig: u64,
    pub flops_pruned: u64,
    pub params_reduction: f64,
    pub flops_reduction: f64,
}

/// Parameter and FLOP accounting against the all-dense model. Biases are
/// never pruned; FLOPs count 2 per multiply-accumulate over the layer's output
/// positions (`spatial[l]`, 1 for FC).
pub fn reduction_stats(masks: &MaskSet, spatial: &[usize]) -> Result<ReductionStats> {
    if spatial.len() != masks.layers.len() {
        let missing = masks.layers.get(spatial.len()).map(|l| l.spec.name.clone()).unwrap_or_default();
        return Err(MaskError::MissingSpatialDims(missing));
    }
    let (mut po, mut pp, mut fo, mut fp) = (0u64, 0u64, 0u64, 0u64);
    for (layer, &hw) in masks.layers.iter().zip(spatial) {
        let full = layer.spec.weight_count();
        let kept = layer.surviving_weights();
        let bias = layer.spec.bias_count();
        po += full + bias;
        pp += kept + bias;
        fo += 2 * full * hw as u64;
        fp += 2 * kept * hw as u64;
    }
    let pct = |orig: u64, pruned: u64| if orig == 0 { 0.0 } else { 100.0 * (orig - pruned) as f64 / orig as f64 };
    Ok(ReductionStats {
        params_orig: po,
        params_pruned: pp,
        flops_orig: fo,
        flops_pruned: fp,
        params_reduction: pct(po, pp),
        flops_reduction: pct(fo, fp),
    })
}

/// Convenience wrapper taking spatial sizes from the model spec.
pub fn model_reduction(masks: &MaskSet, model: &ModelSpec) -> Result<ReductionStats> {
    reduction_stats(masks, &model.spatial_dims()?)
}

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    name: String,
    kind: LayerKind,
    #[serde(rename = "in")]
    in_width: usize,
    #[serde(rename = "out")]
    out_width: usize,
    kernel_elems: usize,
    prunable: bool,
    in_bounds: Vec<usize>,
    out_bounds: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct MaskSetFile {
    schema_version: u64,
    n: usize,
    k: usize,
    edges: Vec<[usize; 2]>,
    layers: Vec<LayerRecord>,
}

pub fn maskset_to_json(m: &MaskSet) -> String {
    let file = MaskSetFile {
        schema_version: SCHEMA_VERSION as u64,
        n: m.n(),
        k: m.k,
        edges: m.graph.edges().iter().map(|&(u, v)| [u, v]).collect(),
        layers: m
            .layers
            .iter()
            .map(|l| LayerRecord {
                name: l.spec.name.clone(),
                kind: l.spec.kind,
                in_width: l.spec.in_width,
                out_width: l.spec.out_width,
                kernel_elems: l.spec.kernel_elems,
                prunable: l.spec.prunable,
                in_bounds: l.in_part.bounds.clone(),
                out_bounds: l.out_part.bounds.clone(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("mask set serializes")
}

pub fn maskset_from_json(text: &str) -> Result<MaskSet> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| MaskError::Parse(e.to_string()))?;
    match value.get("schema_version").and_then(serde_json::Value::as_u64) {
        Some(v) if v == SCHEMA_VERSION as u64 => {}
        Some(v) => return Err(MaskError::SchemaVersionMismatch(v)),
        None => return Err(MaskError::Parse("missing integer field `schema_version`".into())),
    }
    let file: MaskSetFile = serde_json::from_value(value).map_err(|e| MaskError::Parse(e.to_string()))?;
    let graph = AdjacencyGraph::from_edges(file.n, file.edges.iter().map(|&[u, v]| (u, v)))?;
    if graph.uniform_degree() != Some(file.k) {
        return Err(MaskError::Parse(format!("edges do not form a {}-regular graph", file.k)));
    }
    let n = file.n;
    let mut layers = Vec::with_capacity(file.layers.len());
    for rec in file.layers {
        // Bias flags are not part of the mask schema.
        let spec = LayerSpec {
            name: rec.name,
            kind: rec.kind,
            in_width: rec.in_width,
            out_width: rec.out_width,
            kernel_elems: rec.kernel_elems,
            prunable: rec.prunable,
            bias: true,
            out_hw: None,
            branch: false,
        };
        spec.validate()?;
        let in_part = Partition::from_bounds(spec.in_width, rec.in_bounds)?;
        let out_part = Partition::from_bounds(spec.out_width, rec.out_bounds)?;
        let expected = if spec.prunable { n } else { 1 };
        if in_part.groups() != expected || out_part.groups() != expected {
            return Err(MaskError::Parse(format!(
                "layer {:?} must be split into {expected} groups",
                spec.name
            )));
        }
        let mut layer = layer_mask(&graph, &spec)?;
        layer.in_part = in_part;
        layer.out_part = out_part;
        layers.push(layer);
    }
    Ok(MaskSet { graph, k: file.k, layers })
}

pub fn write_maskset(m: &MaskSet, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, maskset_to_json(m))?;
    Ok(())
}

pub fn read_maskset(path: impl AsRef<Path>) -> Result<MaskSet> {
    maskset_from_json(&std::fs::read_to_string(path)?)
}
