//! Finite counter-braid graphs: construction, synthetic flows, and encoding.
//!
//! A braid has `L >= 1` layers. Layer `l` is a bipartite graph between
//! `m_{l-1}` flow nodes of degree `k_l` and `m_l` counter nodes of depth
//! `d_l` bits. For `l >= 2` a bijection maps each layer-`l` flow node onto a
//! layer-`(l-1)` counter node, so upper layers absorb the overflow of the
//! layer below.
//!
//! Randomized constructions use a seeded ChaCha8 stream cipher RNG, so graphs
//! are bit-identical for a fixed seed on every platform. Socket assignment
//! follows the configuration model: every flow socket is matched with a
//! uniformly random counter socket, which makes the counter degrees
//! multinomial and Poisson(`gamma`) in the large-system limit.
//!
//! Multi-edges between a flow and a counter are allowed and counted with
//! multiplicity, both in encoding and in message passing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ensemble::EnsembleParams;
use crate::error::{Error, Result};

/// Counter depth treated as "large enough to never overflow" while still
/// fitting the `u64` arithmetic used by the encoder.
pub const UNBOUNDED_DEPTH: u32 = 62;

/// One bipartite layer, stored as an edge list with per-node incidence
/// indices. Flow degrees are all exactly `k`; counter degrees are whatever
/// the construction produced (possibly zero).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerGraph {
    flow_count: usize,
    counter_count: usize,
    k: u32,
    edges: Vec<(u32, u32)>,
    flow_edges: Vec<Vec<u32>>,
    counter_edges: Vec<Vec<u32>>,
}

impl LayerGraph {
    /// Build from an explicit edge list. Every flow must have degree exactly
    /// `k` and endpoints must be in range.
    pub fn from_edges(
        flow_count: usize,
        counter_count: usize,
        k: u32,
        edges: Vec<(u32, u32)>,
    ) -> Result<Self> {
        if flow_count == 0 || counter_count == 0 {
            return Err(Error::InvalidArgument(
                "layer must have at least one flow and one counter".into(),
            ));
        }
        if edges.len() != flow_count * k as usize {
            return Err(Error::InvalidArgument(format!(
                "expected {} edges for {} flows of degree {}, got {}",
                flow_count * k as usize,
                flow_count,
                k,
                edges.len()
            )));
        }
        let mut flow_edges = vec![Vec::with_capacity(k as usize); flow_count];
        let mut counter_edges: Vec<Vec<u32>> = vec![Vec::new(); counter_count];
        for (id, &(f, c)) in edges.iter().enumerate() {
            if f as usize >= flow_count || c as usize >= counter_count {
                return Err(Error::InvalidArgument(format!(
                    "edge ({f}, {c}) out of range for {flow_count} flows, {counter_count} counters"
                )));
            }
            flow_edges[f as usize].push(id as u32);
            counter_edges[c as usize].push(id as u32);
        }
        for (f, ids) in flow_edges.iter().enumerate() {
            if ids.len() != k as usize {
                return Err(Error::InvalidArgument(format!(
                    "flow {f} has degree {}, expected {k}",
                    ids.len()
                )));
            }
        }
        Ok(Self { flow_count, counter_count, k, edges, flow_edges, counter_edges })
    }

    pub fn flow_count(&self) -> usize {
        self.flow_count
    }

    pub fn counter_count(&self) -> usize {
        self.counter_count
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    /// Edge ids incident to flow `f`, with multiplicity.
    pub fn flow_edge_ids(&self, f: usize) -> &[u32] {
        &self.flow_edges[f]
    }

    /// Edge ids incident to counter `c`, with multiplicity.
    pub fn counter_edge_ids(&self, c: usize) -> &[u32] {
        &self.counter_edges[c]
    }

    pub fn counter_degree(&self, c: usize) -> usize {
        self.counter_edges[c].len()
    }
}

/// Placement metadata of a spatially coupled construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoupledLayout {
    /// Coupling chain length `N` (flow positions `1..=N`).
    pub chain_length: usize,
    /// Smoothing parameter `w`; counter positions span `1..=N+w-1`.
    pub w: usize,
    /// Flows per position.
    pub kappa: usize,
    /// Counters per position.
    pub counters_per_position: usize,
    flow_position: Vec<u32>,
    counter_position: Vec<u32>,
}

impl CoupledLayout {
    /// Total counter positions `M = N + w - 1`.
    pub fn total_positions(&self) -> usize {
        self.chain_length + self.w - 1
    }

    /// 1-based position of a flow node.
    pub fn flow_position(&self, f: usize) -> usize {
        self.flow_position[f] as usize
    }

    /// 1-based position of a counter node.
    pub fn counter_position(&self, c: usize) -> usize {
        self.counter_position[c] as usize
    }
}

/// A complete braid: layers, inter-layer mappings, and counter depths.
#[derive(Debug, Clone, PartialEq)]
pub struct BraidGraph {
    layers: Vec<LayerGraph>,
    /// `mappings[l-2][f]` is the layer-`(l-1)` counter assigned to layer-`l`
    /// flow `f`; each entry is a bijection.
    mappings: Vec<Vec<u32>>,
    depths: Vec<u32>,
    coupled: Option<CoupledLayout>,
}

impl BraidGraph {
    /// Assemble a braid from explicit parts, validating layer chaining and
    /// the bijectivity of each inter-layer mapping.
    pub fn from_parts(
        layers: Vec<LayerGraph>,
        mappings: Vec<Vec<u32>>,
        depths: Vec<u32>,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("braid needs at least one layer".into()));
        }
        if depths.len() != layers.len() {
            return Err(Error::InvalidArgument(format!(
                "got {} depths for {} layers",
                depths.len(),
                layers.len()
            )));
        }
        if let Some(&d) = depths.iter().find(|&&d| d == 0 || d > UNBOUNDED_DEPTH) {
            return Err(Error::InvalidArgument(format!(
                "counter depth {d} outside supported range 1..={UNBOUNDED_DEPTH}"
            )));
        }
        if mappings.len() + 1 != layers.len() {
            return Err(Error::InvalidArgument(format!(
                "got {} mappings for {} layers",
                mappings.len(),
                layers.len()
            )));
        }
        for (i, map) in mappings.iter().enumerate() {
            let upper = &layers[i + 1];
            let lower = &layers[i];
            if upper.flow_count() != lower.counter_count() {
                return Err(Error::InvalidArgument(format!(
                    "layer {} has {} flows but layer {} has {} counters",
                    i + 2,
                    upper.flow_count(),
                    i + 1,
                    lower.counter_count()
                )));
            }
            if map.len() != upper.flow_count() {
                return Err(Error::InvalidArgument(format!(
                    "mapping {} has {} entries for {} flows",
                    i + 2,
                    map.len(),
                    upper.flow_count()
                )));
            }
            let mut seen = vec![false; lower.counter_count()];
            for &c in map {
                if c as usize >= lower.counter_count() || seen[c as usize] {
                    return Err(Error::InvalidArgument(format!(
                        "mapping {} is not a bijection onto layer-{} counters",
                        i + 2,
                        i + 1
                    )));
                }
                seen[c as usize] = true;
            }
        }
        Ok(Self { layers, mappings, depths, coupled: None })
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[LayerGraph] {
        &self.layers
    }

    /// Layer `l` (1-based).
    pub fn layer(&self, l: usize) -> &LayerGraph {
        &self.layers[l - 1]
    }

    /// The first (and for single-layer braids, only) layer.
    pub fn single_layer(&self) -> &LayerGraph {
        &self.layers[0]
    }

    /// Bijection for layer `l >= 2`: entry `f` is the layer-`(l-1)` counter
    /// fed by layer-`l` flow `f`.
    pub fn mapping(&self, l: usize) -> &[u32] {
        &self.mappings[l - 2]
    }

    pub fn depths(&self) -> &[u32] {
        &self.depths
    }

    pub fn coupled(&self) -> Option<&CoupledLayout> {
        self.coupled.as_ref()
    }

    pub fn flow_count(&self) -> usize {
        self.layers[0].flow_count()
    }
}

fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Build a single-layer braid: `m0` flows of degree `k`, `m1` counters, each
/// flow socket matched with a uniformly random counter.
///
/// Counter degrees come out multinomial with mean `gamma = m0 k / m1`,
/// approaching Poisson as the graph grows. Deterministic for a fixed seed.
pub fn build_single_layer(m0: usize, m1: usize, k: u32, seed: u64) -> Result<BraidGraph> {
    if m0 == 0 || m1 == 0 {
        return Err(Error::InvalidArgument("node counts must be positive".into()));
    }
    if k < 2 {
        return Err(Error::InvalidArgument(format!("left degree k must be >= 2, got {k}")));
    }
    let mut rng = rng_from_seed(seed);
    let layer = random_layer(m0, m1, k, &mut rng)?;
    BraidGraph::from_parts(vec![layer], vec![], vec![UNBOUNDED_DEPTH])
}

fn random_layer(m0: usize, m1: usize, k: u32, rng: &mut ChaCha8Rng) -> Result<LayerGraph> {
    let mut edges = Vec::with_capacity(m0 * k as usize);
    for f in 0..m0 {
        for _ in 0..k {
            edges.push((f as u32, rng.random_range(0..m1) as u32));
        }
    }
    LayerGraph::from_edges(m0, m1, k, edges)
}

/// Build a two-layer braid. Layer 1 connects `m0` flows to `m1` counters of
/// depth `d1`; layer 2 connects the `m1` overflow flows to `m2` counters of
/// depth `d2` through a seeded random bijection.
#[allow(clippy::too_many_arguments)]
pub fn build_two_layer(
    m0: usize,
    m1: usize,
    m2: usize,
    k1: u32,
    k2: u32,
    d1: u32,
    d2: u32,
    seed: u64,
) -> Result<BraidGraph> {
    if m0 == 0 || m1 == 0 || m2 == 0 {
        return Err(Error::InvalidArgument("node counts must be positive".into()));
    }
    if k1 < 2 || k2 < 2 {
        return Err(Error::InvalidArgument("left degrees must be >= 2".into()));
    }
    let mut rng = rng_from_seed(seed);
    let layer1 = random_layer(m0, m1, k1, &mut rng)?;
    let layer2 = random_layer(m1, m2, k2, &mut rng)?;
    let mut mapping: Vec<u32> = (0..m1 as u32).collect();
    // Fisher-Yates shuffle for the layer-2 bijection.
    for i in (1..m1).rev() {
        let j = rng.random_range(0..=i);
        mapping.swap(i, j);
    }
    BraidGraph::from_parts(vec![layer1, layer2], vec![mapping], vec![d1, d2])
}

/// Build a spatially coupled single-layer braid.
///
/// `chain_length` flow groups of `kappa` degree-`k` flows sit at positions
/// `1..=N`; counter groups sit at positions `1..=N+w-1`. The `kappa * k`
/// sockets of each flow group are split into `w` equal subgroups by a seeded
/// uniform shuffle, and subgroup `i` connects to uniformly random counters at
/// position `n + i`. Boundary counter groups simply receive fewer sockets,
/// which is what removing the unmatched boundary sockets amounts to.
///
/// Requires `kappa * k` divisible by `w` and an integral number of counters
/// per position (`kappa * beta = kappa * k / gamma`).
pub fn build_coupled(
    kappa: usize,
    params: &EnsembleParams,
    chain_length: usize,
    w: usize,
    seed: u64,
) -> Result<BraidGraph> {
    let n = chain_length;
    if n == 0 || kappa == 0 {
        return Err(Error::InvalidArgument("chain length and kappa must be positive".into()));
    }
    if w < 1 || w > n + 1 {
        return Err(Error::InvalidArgument(format!(
            "smoothing parameter w={w} outside 1..={}",
            n + 1
        )));
    }
    let k = params.k();
    let sockets = kappa * k as usize;
    if sockets % w != 0 {
        return Err(Error::InvalidArgument(format!(
            "kappa * k = {sockets} must be divisible by w = {w}"
        )));
    }
    let cpp_real = kappa as f64 * params.beta();
    let cpp = cpp_real.round() as usize;
    if cpp == 0 || (cpp_real - cpp as f64).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "counters per position kappa * k / gamma = {cpp_real} must be a positive integer"
        )));
    }

    let m = n + w - 1;
    let m0 = n * kappa;
    let m1 = m * cpp;
    let chunk = sockets / w;
    let mut rng = rng_from_seed(seed);
    let mut edges: Vec<(u32, u32)> = Vec::with_capacity(m0 * k as usize);
    let mut socket_owner: Vec<u32> = Vec::with_capacity(sockets);
    for pos in 0..n {
        socket_owner.clear();
        for local in 0..kappa {
            let flow = (pos * kappa + local) as u32;
            for _ in 0..k {
                socket_owner.push(flow);
            }
        }
        // Uniform random interleaver over this position's flow sockets.
        for i in (1..sockets).rev() {
            let j = rng.random_range(0..=i);
            socket_owner.swap(i, j);
        }
        for (idx, &flow) in socket_owner.iter().enumerate() {
            let subgroup = idx / chunk;
            let counter_pos = pos + subgroup;
            let counter = (counter_pos * cpp + rng.random_range(0..cpp)) as u32;
            edges.push((flow, counter));
        }
    }
    // Edge list is per-position socket order; regroup by flow for the
    // degree-k incidence check.
    edges.sort_by_key(|&(f, _)| f);
    let layer = LayerGraph::from_edges(m0, m1, k, edges)?;
    let mut graph = BraidGraph::from_parts(vec![layer], vec![], vec![UNBOUNDED_DEPTH])?;
    let flow_position: Vec<u32> = (0..m0).map(|f| (f / kappa + 1) as u32).collect();
    let counter_position: Vec<u32> = (0..m1).map(|c| (c / cpp + 1) as u32).collect();
    graph.coupled = Some(CoupledLayout {
        chain_length: n,
        w,
        kappa,
        counters_per_position: cpp,
        flow_position,
        counter_position,
    });
    Ok(graph)
}

/// Synthetic flow-size models. Only the exceedance probability `eps` matters
/// to the asymptotic analysis, so the default model is the minimal two-point
/// one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowModel {
    /// Size `f_min` with probability `1 - eps`, `f_min + 1` with probability `eps`.
    TwoPoint,
    /// Size `f_min` with probability `1 - eps`, otherwise `f_min` plus a
    /// geometric excess with success probability `p`.
    GeometricTail { p: f64 },
}

/// Draw `m0` flow sizes. The fraction exceeding `f_min` converges to
/// `params.eps()`; deterministic per seed.
pub fn sample_flows(
    m0: usize,
    params: &EnsembleParams,
    model: FlowModel,
    seed: u64,
) -> Result<Vec<u64>> {
    if let FlowModel::GeometricTail { p } = model {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "geometric tail parameter must lie in (0,1], got {p}"
            )));
        }
    }
    let eps = params.eps();
    let f_min = params.f_min();
    let mut rng = rng_from_seed(seed);
    let mut sizes = Vec::with_capacity(m0);
    for _ in 0..m0 {
        let active = rng.random::<f64>() < eps;
        let size = if !active {
            f_min
        } else {
            match model {
                FlowModel::TwoPoint => f_min + 1,
                FlowModel::GeometricTail { p } => {
                    let mut excess = 1u64;
                    while rng.random::<f64>() >= p && excess < 1 << 32 {
                        excess += 1;
                    }
                    f_min + excess
                }
            }
        };
        sizes.push(size);
    }
    Ok(sizes)
}

/// Overflow of one counter during encoding: `count` carries how many times
/// the counter wrapped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverflowEvent {
    pub layer: usize,
    pub counter: u32,
    pub count: u64,
}

/// Final counter values of every layer plus the overflow log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterState {
    values: Vec<Vec<u64>>,
    overflow_log: Vec<OverflowEvent>,
}

impl CounterState {
    /// Counter values of layer `l` (1-based).
    pub fn layer_values(&self, l: usize) -> &[u64] {
        &self.values[l - 1]
    }

    pub fn overflow_log(&self) -> &[OverflowEvent] {
        &self.overflow_log
    }
}

/// Stream all flows into the braid.
///
/// Each unit of a flow increments all its layer-1 counters modulo `2^{d_1}`;
/// each wrap of a layer-`l` counter increments the layer-`(l+1)` counters of
/// its overflow flow node. The final state is order-independent, so the
/// cascade is computed from per-counter totals. Overflow at the last layer is
/// a capacity error: the braid cannot be decoded.
pub fn encode(graph: &BraidGraph, flows: &[u64]) -> Result<CounterState> {
    let m0 = graph.flow_count();
    if flows.len() != m0 {
        return Err(Error::InvalidArgument(format!(
            "got {} flow sizes for {} flows",
            flows.len(),
            m0
        )));
    }
    let layer_count = graph.layer_count();
    let mut values = Vec::with_capacity(layer_count);
    let mut overflow_log = Vec::new();
    // "Flow sizes" of layer l+1 are the overflow counts of layer l.
    let mut layer_inputs: Vec<u64> = flows.to_vec();
    for l in 1..=layer_count {
        let layer = graph.layer(l);
        let depth = graph.depths()[l - 1];
        let modulus = 1u64 << depth;
        let mut totals = vec![0u64; layer.counter_count()];
        for &(f, c) in layer.edges() {
            let size = layer_inputs[f as usize];
            totals[c as usize] = totals[c as usize].checked_add(size).ok_or_else(|| {
                Error::Capacity(format!("counter {c} of layer {l} overflowed u64 arithmetic"))
            })?;
        }
        let mut overflows = vec![0u64; layer.counter_count()];
        for (c, &total) in totals.iter().enumerate() {
            overflows[c] = total >> depth;
            if overflows[c] > 0 {
                if l == layer_count {
                    return Err(Error::Capacity(format!(
                        "counter {c} of final layer {l} overflowed (total {total} >= 2^{depth})"
                    )));
                }
                overflow_log.push(OverflowEvent { layer: l, counter: c as u32, count: overflows[c] });
            }
        }
        values.push(totals.iter().map(|&t| t % modulus).collect());
        if l < layer_count {
            // Reorder overflow counts into layer-(l+1) flow order via the bijection.
            let mapping = graph.mapping(l + 1);
            layer_inputs = mapping.iter().map(|&c| overflows[c as usize]).collect();
        }
    }
    Ok(CounterState { values, overflow_log })
}

// ---------------------------------------------------------------------------
// Text serialization
// ---------------------------------------------------------------------------

impl BraidGraph {
    /// Serialize to the line-oriented text format:
    ///
    /// ```text
    /// cb <L> <k_1..k_L> <m_0..m_L> <d_1..d_L>
    /// e <layer> <flow> <counter>
    /// map <layer> <flow> <counter>
    /// coupled <N> <w> <kappa> <counters-per-position>
    /// ```
    ///
    /// For a single-layer braid the header reads `cb 1 <k> <m0> <m1> <d1>`.
    /// `map` lines appear for layers 2..L; the `coupled` line only for
    /// spatially coupled graphs (positions are implied by kappa and the
    /// counters-per-position count). Round-trips are lossless.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("cb {}", self.layer_count()));
        for layer in &self.layers {
            out.push_str(&format!(" {}", layer.k()));
        }
        out.push_str(&format!(" {}", self.layers[0].flow_count()));
        for layer in &self.layers {
            out.push_str(&format!(" {}", layer.counter_count()));
        }
        for d in &self.depths {
            out.push_str(&format!(" {d}"));
        }
        out.push('\n');
        for (i, layer) in self.layers.iter().enumerate() {
            for &(f, c) in layer.edges() {
                out.push_str(&format!("e {} {f} {c}\n", i + 1));
            }
        }
        for (i, map) in self.mappings.iter().enumerate() {
            for (f, &c) in map.iter().enumerate() {
                out.push_str(&format!("map {} {f} {c}\n", i + 2));
            }
        }
        if let Some(layout) = &self.coupled {
            out.push_str(&format!(
                "coupled {} {} {} {}\n",
                layout.chain_length, layout.w, layout.kappa, layout.counters_per_position
            ));
        }
        out
    }

    /// Parse the text format produced by [`BraidGraph::to_text`].
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty graph file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.first() != Some(&"cb") {
            return Err(Error::Parse("header must start with 'cb'".into()));
        }
        let parse_usize = |s: &str, what: &str| -> Result<usize> {
            s.parse().map_err(|_| Error::Parse(format!("bad {what}: {s:?}")))
        };
        let layer_count = parse_usize(fields.get(1).copied().unwrap_or(""), "layer count")?;
        let expected = 2 + layer_count + (layer_count + 1) + layer_count;
        if fields.len() != expected {
            return Err(Error::Parse(format!(
                "header has {} fields, expected {expected} for {layer_count} layers",
                fields.len()
            )));
        }
        let mut pos = 2;
        let mut ks = Vec::with_capacity(layer_count);
        for _ in 0..layer_count {
            ks.push(parse_usize(fields[pos], "degree")? as u32);
            pos += 1;
        }
        let mut sizes = Vec::with_capacity(layer_count + 1);
        for _ in 0..=layer_count {
            sizes.push(parse_usize(fields[pos], "node count")?);
            pos += 1;
        }
        let mut depths = Vec::with_capacity(layer_count);
        for _ in 0..layer_count {
            depths.push(parse_usize(fields[pos], "depth")? as u32);
            pos += 1;
        }

        let mut edges: Vec<Vec<(u32, u32)>> = vec![Vec::new(); layer_count];
        let mut maps: Vec<Vec<(usize, u32)>> = vec![Vec::new(); layer_count.saturating_sub(1)];
        let mut coupled_fields: Option<Vec<usize>> = None;
        for line in lines {
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts.first().copied() {
                Some("e") if parts.len() == 4 => {
                    let l = parse_usize(parts[1], "edge layer")?;
                    if l == 0 || l > layer_count {
                        return Err(Error::Parse(format!("edge layer {l} out of range")));
                    }
                    let f = parse_usize(parts[2], "flow index")? as u32;
                    let c = parse_usize(parts[3], "counter index")? as u32;
                    edges[l - 1].push((f, c));
                }
                Some("map") if parts.len() == 4 => {
                    let l = parse_usize(parts[1], "map layer")?;
                    if l < 2 || l > layer_count {
                        return Err(Error::Parse(format!("map layer {l} out of range")));
                    }
                    let f = parse_usize(parts[2], "flow index")?;
                    let c = parse_usize(parts[3], "counter index")? as u32;
                    maps[l - 2].push((f, c));
                }
                Some("coupled") if parts.len() == 5 => {
                    coupled_fields = Some(
                        parts[1..]
                            .iter()
                            .map(|s| parse_usize(s, "coupled field"))
                            .collect::<Result<_>>()?,
                    );
                }
                _ => return Err(Error::Parse(format!("unrecognized line: {line:?}"))),
            }
        }

        let mut layers = Vec::with_capacity(layer_count);
        for l in 0..layer_count {
            layers.push(LayerGraph::from_edges(
                sizes[l],
                sizes[l + 1],
                ks[l],
                std::mem::take(&mut edges[l]),
            )?);
        }
        let mut mappings = Vec::with_capacity(maps.len());
        for (i, mut entries) in maps.into_iter().enumerate() {
            if entries.len() != sizes[i + 1] {
                return Err(Error::Parse(format!(
                    "mapping for layer {} has {} entries, expected {}",
                    i + 2,
                    entries.len(),
                    sizes[i + 1]
                )));
            }
            entries.sort_by_key(|&(f, _)| f);
            if entries.iter().enumerate().any(|(f, &(ff, _))| f != ff) {
                return Err(Error::Parse(format!("mapping for layer {} has gaps", i + 2)));
            }
            mappings.push(entries.into_iter().map(|(_, c)| c).collect());
        }
        let mut graph = BraidGraph::from_parts(layers, mappings, depths)?;
        if let Some(fields) = coupled_fields {
            let (n, w, kappa, cpp) = (fields[0], fields[1], fields[2], fields[3]);
            if n * kappa != graph.flow_count()
                || (n + w - 1) * cpp != graph.single_layer().counter_count()
            {
                return Err(Error::Parse("coupled line inconsistent with node counts".into()));
            }
            let flow_position = (0..graph.flow_count()).map(|f| (f / kappa + 1) as u32).collect();
            let counter_position = (0..graph.single_layer().counter_count())
                .map(|c| (c / cpp + 1) as u32)
                .collect();
            graph.coupled = Some(CoupledLayout {
                chain_length: n,
                w,
                kappa,
                counters_per_position: cpp,
                flow_position,
                counter_position,
            });
        }
        Ok(graph)
    }
}

/// Two-layer toy braid shared by encode and decode tests: flow 0 (size 5)
/// sits on counters 0,1 of a depth-2 first layer; flow 1 (size 0) on
/// counters 1,2; the second layer is a decodable chain.
#[cfg(test)]
pub(crate) fn two_layer_toy() -> BraidGraph {
    let layer1 = LayerGraph::from_edges(2, 3, 2, vec![(0, 0), (0, 1), (1, 1), (1, 2)]).unwrap();
    let layer2 =
        LayerGraph::from_edges(3, 4, 2, vec![(0, 0), (0, 1), (1, 1), (1, 2), (2, 2), (2, 3)])
            .unwrap();
    BraidGraph::from_parts(vec![layer1, layer2], vec![vec![0, 1, 2]], vec![2, 20]).unwrap()
}
