//! Per-layer batch runtime profiles.
//!
//! A profile file describes *components* (contiguous blocks of layers with a
//! measured runtime per batch size) and *DNNs* (ordered lists of components).
//! A component referenced by more than one DNN is a shared stage: requests of
//! different DNNs at the same layer of that component can share a batch.
//!
//! File times are milliseconds; loaded tables hold seconds.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::RangeInclusive;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ProfileError;
use crate::model::DnnId;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComponentId(pub String);

impl From<&str> for ComponentId {
    fn from(s: &str) -> Self {
        ComponentId(s.to_owned())
    }
}

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Runtime `h_k(b)` of every layer `k` for batch sizes `1..=max_batch`.
///
/// Values between measured batch sizes are linearly interpolated. Past the
/// largest measured size the per-request cost of that last point is kept.
/// Batch sizes above `max_batch` are infeasible.
#[derive(Clone, Debug, PartialEq)]
pub struct CostTable<T> {
    measured: Vec<Vec<(usize, T)>>,
    dense: Vec<T>,
    max_batch: usize,
}

impl<T: Scalar> CostTable<T> {
    /// Builds a table from measured points, one list per layer.
    pub fn new(measured: Vec<Vec<(usize, T)>>, max_batch: usize) -> Result<Self, ProfileError> {
        Self::named("table", measured, max_batch)
    }

    fn named(name: &str, mut measured: Vec<Vec<(usize, T)>>, max_batch: usize) -> Result<Self, ProfileError> {
        if max_batch == 0 {
            return Err(ProfileError::ZeroMaxBatch);
        }
        for (i, points) in measured.iter_mut().enumerate() {
            let layer = i + 1;
            points.sort_by_key(|p| p.0);
            points.dedup_by_key(|p| p.0);
            for &(b, v) in points.iter() {
                if b == 0 {
                    return Err(ProfileError::ZeroBatch { component: name.to_owned(), layer });
                }
                if !(v > T::zero()) {
                    return Err(ProfileError::NonPositiveRuntime {
                        component: name.to_owned(),
                        layer,
                        batch: b,
                        value: v.to_f64(),
                    });
                }
            }
            if points.first().map(|p| p.0) != Some(1) {
                return Err(ProfileError::MissingBatchOne { component: name.to_owned(), layer });
            }
        }
        let mut table = CostTable { measured, dense: Vec::new(), max_batch };
        table.densify();
        Ok(table)
    }

    /// Fully measured table with `h_k(b) = f(k, b)` for `k` in `1..=layers`.
    pub fn from_fn(layers: usize, max_batch: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let measured = (1..=layers).map(|k| (1..=max_batch).map(|b| (b, f(k, b))).collect()).collect();
        Self::new(measured, max_batch).expect("from_fn values must be positive")
    }

    fn densify(&mut self) {
        let b_max = self.max_batch;
        let mut dense = Vec::with_capacity(self.measured.len() * b_max);
        for points in &self.measured {
            for b in 1..=b_max {
                dense.push(interpolate(points, b));
            }
        }
        self.dense = dense;
    }

    pub fn num_layers(&self) -> usize {
        self.measured.len()
    }

    pub fn max_batch(&self) -> usize {
        self.max_batch
    }

    pub fn measured(&self, layer: usize) -> &[(usize, T)] {
        &self.measured[layer - 1]
    }

    /// `h_k(b)`; `None` when `b` exceeds the batch bound.
    #[inline]
    pub fn lookup(&self, layer: usize, batch: usize) -> Option<T> {
        if batch == 0 || batch > self.max_batch {
            return None;
        }
        Some(self.dense[(layer - 1) * self.max_batch + batch - 1])
    }

    /// Same measurements under a different batch bound.
    pub fn with_max_batch(&self, max_batch: usize) -> Self {
        let mut t = CostTable { measured: self.measured.clone(), dense: Vec::new(), max_batch: max_batch.max(1) };
        t.densify();
        t
    }

    /// `Σ_{k ≥ from} h_k(1)`.
    pub fn solo_runtime(&self, from_layer: usize) -> T {
        (from_layer..=self.num_layers()).map(|k| self.lookup(k, 1).unwrap()).sum()
    }

    /// `Σ_k h_k(b)` over the whole table.
    pub fn total_at(&self, batch: usize) -> Option<T> {
        (1..=self.num_layers()).map(|k| self.lookup(k, batch)).sum()
    }

    /// Fractional per-request runtime reduction of a batch of `b` against one
    /// request: `1 − (Σ h(b) / b) / Σ h(1)`.
    pub fn per_request_reduction(&self, batch: usize) -> Option<f64> {
        let one = self.total_at(1)?.to_f64();
        let many = self.total_at(batch)?.to_f64();
        Some(1.0 - (many / batch as f64) / one)
    }

    /// Tables stacked layer after layer; the bound is the smallest of theirs.
    pub fn concat(tables: &[&CostTable<T>]) -> Self {
        let max_batch = tables.iter().map(|t| t.max_batch).min().unwrap_or(1);
        let measured = tables.iter().flat_map(|t| t.measured.iter().cloned()).collect();
        let mut t = CostTable { measured, dense: Vec::new(), max_batch };
        t.densify();
        t
    }

    /// One layer per group with `H_g(b) = Σ_{k ∈ g} h_k(b)`.
    pub fn aggregate(&self, groups: &LayerGroups) -> Self {
        let measured = groups
            .iter()
            .map(|range| {
                (1..=self.max_batch).map(|b| (b, range.clone().map(|k| self.lookup(k, b).unwrap()).sum())).collect()
            })
            .collect();
        CostTable::new(measured, self.max_batch).expect("sums of positive runtimes are positive")
    }

    /// Runtime of each layer at batch size one.
    pub fn solo_layers(&self) -> Vec<T> {
        (1..=self.num_layers()).map(|k| self.lookup(k, 1).unwrap()).collect()
    }
}

fn interpolate<T: Scalar>(points: &[(usize, T)], b: usize) -> T {
    match points.binary_search_by_key(&b, |p| p.0) {
        Ok(i) => points[i].1,
        Err(i) if i == points.len() => {
            let (b_last, v_last) = points[i - 1];
            v_last * T::from_usize(b) / T::from_usize(b_last)
        }
        Err(i) => {
            // i > 0 because b = 1 is always measured
            let (b0, v0) = points[i - 1];
            let (b1, v1) = points[i];
            v0 + (v1 - v0) * T::from_usize(b - b0) / T::from_usize(b1 - b0)
        }
    }
}

/// `h_k(b)`, or `None` (infeasible) above the batch bound.
pub fn lookup_h<T: Scalar>(table: &CostTable<T>, layer: usize, batch: usize) -> Option<T> {
    table.lookup(layer, batch)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubadditivityViolation<T> {
    pub layer: usize,
    pub b1: usize,
    pub b2: usize,
    /// `h_k(b1 + b2)`
    pub combined: T,
    /// `h_k(b1) + h_k(b2)`
    pub separate: T,
}

/// Every measured `(k, b1, b2)` with `b1 ≤ b2`, `b1 + b2` measured and within
/// the bound, where `h_k(b1 + b2) > h_k(b1) + h_k(b2)`. Excess below one part
/// in 10^12 is treated as rounding.
pub fn check_subadditivity<T: Scalar>(table: &CostTable<T>) -> Vec<SubadditivityViolation<T>> {
    let slack = T::one() + T::from_f64(1e-12);
    let mut out = Vec::new();
    for k in 1..=table.num_layers() {
        let points = table.measured(k);
        let at = |b: usize| points.binary_search_by_key(&b, |p| p.0).ok().map(|i| points[i].1);
        for (i, &(b1, h1)) in points.iter().enumerate() {
            for &(b2, h2) in &points[i..] {
                let b = b1 + b2;
                if b > table.max_batch() {
                    continue;
                }
                if let Some(hc) = at(b) {
                    if hc > (h1 + h2) * slack {
                        out.push(SubadditivityViolation { layer: k, b1, b2, combined: hc, separate: h1 + h2 });
                    }
                }
            }
        }
    }
    out
}

/// Contiguous partition of layers `1..=N` into groups.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerGroups {
    /// Inclusive 1-based `(first, last)` layer of each group.
    bounds: Vec<(usize, usize)>,
}

impl LayerGroups {
    pub fn identity(layers: usize) -> Self {
        LayerGroups { bounds: (1..=layers).map(|k| (k, k)).collect() }
    }

    pub fn from_bounds(bounds: Vec<(usize, usize)>) -> Self {
        LayerGroups { bounds }
    }

    pub fn len(&self) -> usize {
        self.bounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_empty()
    }

    pub fn bounds(&self) -> &[(usize, usize)] {
        &self.bounds
    }

    pub fn iter(&self) -> impl Iterator<Item = RangeInclusive<usize>> + '_ {
        self.bounds.iter().map(|&(a, b)| a..=b)
    }

    /// 1-based group containing `layer`; `len() + 1` for the finished position.
    pub fn group_of(&self, layer: usize) -> usize {
        match self.bounds.iter().position(|&(_, last)| layer <= last) {
            Some(g) => g + 1,
            None => self.bounds.len() + 1,
        }
    }

    /// First layer of group `g` (1-based).
    pub fn first_layer(&self, group: usize) -> usize {
        self.bounds[group - 1].0
    }

    pub fn last_layer(&self, group: usize) -> usize {
        self.bounds[group - 1].1
    }
}

/// Greedy split of layers into `groups` contiguous groups of roughly equal
/// single-request runtime.
///
/// A group closes once its runtime reaches `total / groups`, or when the layers
/// left are exactly enough to give every remaining group one layer. The last
/// group takes whatever remains.
pub fn group_layers<T: Scalar>(solo: &[T], groups: usize) -> Result<LayerGroups, ProfileError> {
    let n = solo.len();
    if groups == 0 {
        return Err(ProfileError::ZeroGroups);
    }
    if groups > n {
        return Err(ProfileError::TooManyGroups { layers: n, groups });
    }
    let total: T = solo.iter().copied().sum();
    let target = total / T::from_usize(groups);
    let mut bounds = Vec::with_capacity(groups);
    let mut start = 1;
    let mut acc = T::zero();
    for k in 1..=n {
        if bounds.len() == groups - 1 {
            break;
        }
        acc = acc + solo[k - 1];
        let layers_left = n - k;
        let groups_left = groups - bounds.len() - 1;
        if acc >= target || layers_left == groups_left {
            bounds.push((start, k));
            start = k + 1;
            acc = T::zero();
        }
    }
    bounds.push((start, n));
    Ok(LayerGroups { bounds })
}

/// A block of layers that one or more DNNs reuse.
#[derive(Clone, Debug, PartialEq)]
pub struct SharedComponent<T> {
    pub id: ComponentId,
    pub layer_names: Vec<String>,
    pub cost: CostTable<T>,
    /// Bits per request after each layer.
    pub output_bits: Vec<f64>,
}

impl<T: Scalar> SharedComponent<T> {
    pub fn num_layers(&self) -> usize {
        self.cost.num_layers()
    }

    /// Component with one aggregated layer per group.
    pub fn grouped(&self, groups: usize) -> Result<(Self, LayerGroups), ProfileError> {
        let g = group_layers(&self.cost.solo_layers(), groups.min(self.num_layers()))?;
        let cost = self.cost.aggregate(&g);
        let layer_names = g.iter().map(|r| format!("{}..{}", r.start(), r.end())).collect();
        let output_bits = g.iter().map(|r| self.output_bits[*r.end() - 1]).collect();
        Ok((SharedComponent { id: self.id.clone(), layer_names, cost, output_bits }, g))
    }
}

/// One stage of a DNN: a whole component placed at `first_layer..`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRef {
    pub component: ComponentId,
    pub first_layer: usize,
    pub num_layers: usize,
}

impl StageRef {
    pub fn last_layer(&self) -> usize {
        self.first_layer + self.num_layers - 1
    }

    pub fn contains(&self, layer: usize) -> bool {
        layer >= self.first_layer && layer <= self.last_layer()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DnnProfile {
    pub id: DnnId,
    pub stages: Vec<StageRef>,
    pub layer_groups: LayerGroups,
}

impl DnnProfile {
    /// DNN made of a single private component.
    pub fn single(id: &str, component: &str, layers: usize) -> Self {
        DnnProfile {
            id: DnnId::from(id),
            stages: vec![StageRef { component: ComponentId::from(component), first_layer: 1, num_layers: layers }],
            layer_groups: LayerGroups::identity(layers),
        }
    }

    pub fn num_layers(&self) -> usize {
        self.stages.last().map(|s| s.last_layer()).unwrap_or(0)
    }

    /// Stage index holding `layer`.
    pub fn stage_of(&self, layer: usize) -> Option<usize> {
        self.stages.iter().position(|s| s.contains(layer))
    }

    pub fn stage_for(&self, component: &ComponentId) -> Option<&StageRef> {
        self.stages.iter().find(|s| &s.component == component)
    }
}

/// Loaded profile: components, DNNs and each DNN's flattened cost table.
#[derive(Clone, Debug)]
pub struct ProfileSet<T> {
    max_batch: usize,
    components: BTreeMap<ComponentId, SharedComponent<T>>,
    dnns: BTreeMap<DnnId, DnnProfile>,
    tables: BTreeMap<DnnId, CostTable<T>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProfileFile {
    pub max_batch: usize,
    pub components: Vec<ComponentRecord>,
    pub dnns: Vec<DnnRecord>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComponentRecord {
    pub id: String,
    pub layers: Vec<LayerRecord>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LayerRecord {
    #[serde(default)]
    pub name: String,
    /// Batch size → milliseconds.
    pub runtime_ms: BTreeMap<usize, f64>,
    #[serde(default)]
    pub output_bits: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DnnRecord {
    pub id: String,
    pub stages: Vec<String>,
}

impl<T: Scalar> ProfileSet<T> {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProfileError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ProfileError> {
        let file: ProfileFile = serde_json::from_str(text)?;
        Self::from_file(&file)
    }

    pub fn from_file(file: &ProfileFile) -> Result<Self, ProfileError> {
        if file.max_batch == 0 {
            return Err(ProfileError::ZeroMaxBatch);
        }
        let ms = T::from_f64(1000.0);
        let mut components = BTreeMap::new();
        for rec in &file.components {
            if rec.layers.is_empty() {
                return Err(ProfileError::EmptyComponent(rec.id.clone()));
            }
            let measured = rec
                .layers
                .iter()
                .map(|l| l.runtime_ms.iter().map(|(&b, &v)| (b, T::from_f64(v) / ms)).collect())
                .collect();
            let cost = CostTable::named(&rec.id, measured, file.max_batch)?;
            let comp = SharedComponent {
                id: ComponentId(rec.id.clone()),
                layer_names: rec.layers.iter().map(|l| l.name.clone()).collect(),
                cost,
                output_bits: rec.layers.iter().map(|l| l.output_bits).collect(),
            };
            if components.insert(comp.id.clone(), comp).is_some() {
                return Err(ProfileError::DuplicateComponent(rec.id.clone()));
            }
        }
        let mut dnns = BTreeMap::new();
        for rec in &file.dnns {
            if rec.stages.is_empty() {
                return Err(ProfileError::EmptyDnn(rec.id.clone()));
            }
            let mut stages = Vec::new();
            let mut next = 1;
            for c in &rec.stages {
                let cid = ComponentId(c.clone());
                let comp = components
                    .get(&cid)
                    .ok_or_else(|| ProfileError::UnknownComponent { dnn: rec.id.clone(), component: c.clone() })?;
                if stages.iter().any(|s: &StageRef| s.component == cid) {
                    return Err(ProfileError::RepeatedComponent { dnn: rec.id.clone(), component: c.clone() });
                }
                stages.push(StageRef { component: cid, first_layer: next, num_layers: comp.num_layers() });
                next += comp.num_layers();
            }
            let dnn = DnnProfile { id: DnnId(rec.id.clone()), stages, layer_groups: LayerGroups::identity(next - 1) };
            if dnns.insert(dnn.id.clone(), dnn).is_some() {
                return Err(ProfileError::DuplicateDnn(rec.id.clone()));
            }
        }
        Ok(Self::assemble(file.max_batch, components, dnns))
    }

    /// Builds a set directly from components and DNN stage lists.
    pub fn from_parts(
        max_batch: usize,
        components: Vec<SharedComponent<T>>,
        dnns: Vec<(&str, Vec<&str>)>,
    ) -> Result<Self, ProfileError> {
        let components: BTreeMap<_, _> = components.into_iter().map(|c| (c.id.clone(), c)).collect();
        let mut out = BTreeMap::new();
        for (id, stage_ids) in dnns {
            let mut stages = Vec::new();
            let mut next = 1;
            for c in stage_ids {
                let cid = ComponentId::from(c);
                let comp = components
                    .get(&cid)
                    .ok_or_else(|| ProfileError::UnknownComponent { dnn: id.to_owned(), component: c.to_owned() })?;
                stages.push(StageRef { component: cid, first_layer: next, num_layers: comp.num_layers() });
                next += comp.num_layers();
            }
            out.insert(
                DnnId::from(id),
                DnnProfile { id: DnnId::from(id), stages, layer_groups: LayerGroups::identity(next - 1) },
            );
        }
        Ok(Self::assemble(max_batch, components, out))
    }

    fn assemble(
        max_batch: usize,
        components: BTreeMap<ComponentId, SharedComponent<T>>,
        dnns: BTreeMap<DnnId, DnnProfile>,
    ) -> Self {
        let tables = dnns
            .values()
            .map(|d| {
                let parts: Vec<&CostTable<T>> = d.stages.iter().map(|s| &components[&s.component].cost).collect();
                (d.id.clone(), CostTable::concat(&parts).with_max_batch(max_batch))
            })
            .collect();
        ProfileSet { max_batch, components, dnns, tables }
    }

    pub fn max_batch(&self) -> usize {
        self.max_batch
    }

    /// Same profiles under another batch bound.
    pub fn with_max_batch(&self, max_batch: usize) -> Self {
        let components = self
            .components
            .iter()
            .map(|(id, c)| {
                let mut c = c.clone();
                c.cost = c.cost.with_max_batch(max_batch);
                (id.clone(), c)
            })
            .collect();
        let mut set = Self::assemble(max_batch, components, self.dnns.clone());
        for (id, d) in &self.dnns {
            set.dnns.get_mut(id).unwrap().layer_groups = d.layer_groups.clone();
        }
        set
    }

    pub fn dnn(&self, id: &DnnId) -> Option<&DnnProfile> {
        self.dnns.get(id)
    }

    pub fn dnns(&self) -> impl Iterator<Item = &DnnProfile> {
        self.dnns.values()
    }

    pub fn dnn_ids(&self) -> Vec<DnnId> {
        self.dnns.keys().cloned().collect()
    }

    pub fn component(&self, id: &ComponentId) -> Option<&SharedComponent<T>> {
        self.components.get(id)
    }

    pub fn components(&self) -> impl Iterator<Item = &SharedComponent<T>> {
        self.components.values()
    }

    /// Flattened cost table of a DNN, layers `1..=N`.
    pub fn table(&self, id: &DnnId) -> Option<&CostTable<T>> {
        self.tables.get(id)
    }

    /// Whether more than one DNN references the component.
    pub fn is_shared(&self, component: &ComponentId) -> bool {
        self.dnns.values().filter(|d| d.stage_for(component).is_some()).count() > 1
    }

    pub fn has_shared_components(&self) -> bool {
        self.components.keys().any(|c| self.is_shared(c))
    }

    /// Whether `layer` of `dnn` lies in a shared stage.
    pub fn in_shared_stage(&self, dnn: &DnnId, layer: usize) -> bool {
        self.dnns
            .get(dnn)
            .and_then(|d| d.stage_of(layer).map(|s| self.is_shared(&d.stages[s].component)))
            .unwrap_or(false)
    }

    /// Where a request of `from` at `layer` sits in `to`'s layer numbering,
    /// plus the last layer of that shared stage in `to`.
    pub fn map_position(&self, from: &DnnId, layer: usize, to: &DnnId) -> Option<(usize, usize)> {
        let src = self.dnns.get(from)?;
        let dst = self.dnns.get(to)?;
        let stage = &src.stages[src.stage_of(layer)?];
        let target = dst.stage_for(&stage.component)?;
        let intra = layer - stage.first_layer;
        Some((target.first_layer + intra, target.last_layer()))
    }

    /// Splits the DNN into `groups` groups (see [`group_layers`]) and stores them.
    pub fn group_dnn(&mut self, dnn: &DnnId, groups: usize) -> Result<&LayerGroups, ProfileError> {
        let solo = self.tables[dnn].solo_layers();
        let g = group_layers(&solo, groups)?;
        let d = self.dnns.get_mut(dnn).expect("dnn present");
        d.layer_groups = g;
        Ok(&d.layer_groups)
    }

    /// Profiles where every component is collapsed into at most `groups`
    /// aggregated layers; DNNs keep their stage structure.
    pub fn grouped(&self, groups: usize) -> Result<Self, ProfileError> {
        let mut components = BTreeMap::new();
        for (id, c) in &self.components {
            let (gc, _) = c.grouped(groups)?;
            components.insert(id.clone(), gc);
        }
        let dnns = self
            .dnns
            .values()
            .map(|d| {
                let mut next = 1;
                let stages: Vec<StageRef> = d
                    .stages
                    .iter()
                    .map(|s| {
                        let n = components[&s.component].num_layers();
                        let st = StageRef { component: s.component.clone(), first_layer: next, num_layers: n };
                        next += n;
                        st
                    })
                    .collect();
                let n = next - 1;
                (d.id.clone(), DnnProfile { id: d.id.clone(), stages, layer_groups: LayerGroups::identity(n) })
            })
            .collect();
        Ok(Self::assemble(self.max_batch, components, dnns))
    }

    /// `(component, intra-component layer)` for a DNN layer.
    pub fn component_layer(&self, dnn: &DnnId, layer: usize) -> Option<(&ComponentId, usize)> {
        let d = self.dnns.get(dnn)?;
        let s = &d.stages[d.stage_of(layer)?];
        Some((&s.component, layer - s.first_layer + 1))
    }

    /// Output bits per request after `layer` of `dnn`.
    pub fn output_bits(&self, dnn: &DnnId, layer: usize) -> Option<f64> {
        let (c, intra) = self.component_layer(dnn, layer)?;
        self.components.get(c).map(|c| c.output_bits[intra - 1])
    }
}

/// Loads a profile file.
pub fn load_profile<T: Scalar>(path: impl AsRef<Path>) -> Result<ProfileSet<T>, ProfileError> {
    ProfileSet::load(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(points: &[(usize, f64)], max_batch: usize) -> CostTable<f64> {
        CostTable::new(vec![points.to_vec()], max_batch).unwrap()
    }

    #[test]
    fn lookup_exact_interpolated_and_infeasible() {
        let t = table(&[(1, 10.0), (10, 12.0)], 90);
        assert_eq!(lookup_h(&t, 1, 1), Some(10.0));
        let h4 = lookup_h(&t, 1, 4).unwrap();
        assert!((h4 - (10.0 + 2.0 * 3.0 / 9.0)).abs() < 1e-12);
        assert!((h4 - 10.667).abs() < 1e-3);
        assert_eq!(lookup_h(&t, 1, 91), None);
        assert_eq!(lookup_h(&t, 1, 10), Some(12.0));
    }

    #[test]
    fn past_the_grid_keeps_last_per_request_cost() {
        let t = table(&[(1, 10.0), (10, 12.0)], 20);
        assert!((t.lookup(1, 20).unwrap() - 24.0).abs() < 1e-12);
    }

    #[test]
    fn missing_batch_one_is_rejected() {
        let err = CostTable::<f64>::new(vec![vec![(1, 1.0)], vec![(1, 1.0)], vec![(2, 1.0)]], 4).unwrap_err();
        assert!(matches!(err, ProfileError::MissingBatchOne { layer: 3, .. }));
        assert!(err.to_string().contains("layer 3"));
    }

    #[test]
    fn non_positive_runtime_is_rejected() {
        let err = CostTable::<f64>::new(vec![vec![(1, -1.0)]], 4).unwrap_err();
        assert!(matches!(err, ProfileError::NonPositiveRuntime { .. }));
    }

    #[test]
    fn subadditivity_report() {
        let bad = table(&[(1, 10.0), (2, 25.0)], 8);
        let v = check_subadditivity(&bad);
        assert_eq!(v.len(), 1);
        assert_eq!((v[0].b1, v[0].b2), (1, 1));
        assert!(check_subadditivity(&table(&[(1, 10.0), (2, 12.0)], 8)).is_empty());
        let linear = CostTable::from_fn(3, 16, |k, b| (k * b) as f64);
        assert!(check_subadditivity(&linear).is_empty());
    }

    #[test]
    fn grouping_examples() {
        let g = group_layers(&[10.0, 10.0, 10.0, 10.0], 2).unwrap();
        assert_eq!(g.bounds(), &[(1, 2), (3, 4)]);
        let g = group_layers(&[10.0, 10.0, 10.0, 10.0], 1).unwrap();
        assert_eq!(g.bounds(), &[(1, 4)]);
        // threshold 20: five groups over five layers forces singletons
        let g = group_layers(&[30.0, 5.0, 5.0, 20.0, 40.0], 5).unwrap();
        assert_eq!(g.bounds(), &[(1, 1), (2, 2), (3, 3), (4, 4), (5, 5)]);
        // threshold 100/3: {30,5} reaches it, {5,20} is forced closed to leave {40}
        let g = group_layers(&[30.0, 5.0, 5.0, 20.0, 40.0], 3).unwrap();
        assert_eq!(g.bounds(), &[(1, 2), (3, 4), (5, 5)]);
        assert!(matches!(group_layers(&[1.0, 1.0], 3), Err(ProfileError::TooManyGroups { .. })));
    }

    #[test]
    fn group_of_maps_layers() {
        let g = LayerGroups::from_bounds(vec![(1, 2), (3, 5)]);
        assert_eq!(g.group_of(1), 1);
        assert_eq!(g.group_of(3), 2);
        assert_eq!(g.group_of(6), 3);
    }

    const TWO_LAYER: &str = r#"{
        "max_batch": 90,
        "components": [{"id": "c", "layers": [
            {"name": "l1", "runtime_ms": {"1": 10.0, "10": 12.0}, "output_bits": 100},
            {"name": "l2", "runtime_ms": {"1": 14.0, "10": 16.0}, "output_bits": 50}
        ]}],
        "dnns": [{"id": "net", "stages": ["c"]}]
    }"#;

    #[test]
    fn load_two_layer_profile() {
        let p = ProfileSet::<f64>::from_json(TWO_LAYER).unwrap();
        let t = p.table(&DnnId::from("net")).unwrap();
        assert_eq!(t.num_layers(), 2);
        assert_eq!(t.measured(1).iter().map(|p| p.0).collect::<Vec<_>>(), vec![1, 10]);
        assert!((t.lookup(1, 1).unwrap() - 0.010).abs() < 1e-15);
        assert_eq!(p.output_bits(&DnnId::from("net"), 2), Some(50.0));
    }

    #[test]
    fn load_rejects_missing_batch_one_and_unknown_component() {
        let bad = TWO_LAYER.replace(r#""1": 14.0, "#, "");
        let err = ProfileSet::<f64>::from_json(&bad).unwrap_err();
        assert!(matches!(err, ProfileError::MissingBatchOne { layer: 2, .. }));
        let bad = TWO_LAYER.replace(r#""stages": ["c"]"#, r#""stages": ["zz"]"#);
        assert!(matches!(ProfileSet::<f64>::from_json(&bad), Err(ProfileError::UnknownComponent { .. })));
        assert!(matches!(ProfileSet::<f64>::from_json("{"), Err(ProfileError::Parse(_))));
    }

    #[test]
    fn shared_positions_map_between_dnns() {
        let comp = |id: &str, n: usize| SharedComponent {
            id: ComponentId::from(id),
            layer_names: vec![String::new(); n],
            cost: CostTable::from_fn(n, 8, |_, b| 1.0 + b as f64),
            output_bits: vec![0.0; n],
        };
        let p = ProfileSet::from_parts(
            8,
            vec![comp("head_a", 2), comp("flow", 3), comp("tail_a", 2), comp("tail_b", 1)],
            vec![("a", vec!["head_a", "flow", "tail_a"]), ("b", vec!["flow", "tail_b"])],
        )
        .unwrap();
        let a = DnnId::from("a");
        let b = DnnId::from("b");
        assert!(p.is_shared(&ComponentId::from("flow")));
        assert!(!p.is_shared(&ComponentId::from("tail_a")));
        // layer 2 of b is the second flow layer, layer 4 of a
        assert_eq!(p.map_position(&b, 2, &a), Some((4, 5)));
        assert_eq!(p.map_position(&a, 1, &b), None);
        assert!(p.in_shared_stage(&a, 3));
        assert!(!p.in_shared_stage(&b, 4));
        let g = p.grouped(2).unwrap();
        assert_eq!(g.dnn(&a).unwrap().num_layers(), 2 + 2 + 2);
        assert_eq!(g.dnn(&b).unwrap().num_layers(), 2 + 1);
    }
}
