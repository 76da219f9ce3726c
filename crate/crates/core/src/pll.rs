//! Robustness of cluster labels under partial labeling.
//!
//! Labels of a random share of a cluster's journeys are hidden and then
//! recovered by propagation over a k-nearest-neighbor graph of the whole
//! matrix. How well a cluster's labels come back as the hidden share grows
//! says how predictable that cluster is.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::journeys::shuffled;
use crate::matrix::FeatureMatrix;
use crate::models::{evaluate, squared_distance};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PllConfig {
    /// Per-iteration modification rate allowed on labeled rows.
    pub alpha: f64,
    pub k_candidates: Vec<usize>,
    pub k: usize,
    pub drop_fractions: Vec<f64>,
    pub repeats: usize,
    pub tolerance: f64,
    pub max_iter: usize,
    pub folds: usize,
    pub seed: u64,
}

impl Default for PllConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            k_candidates: (1..=15).step_by(2).collect(),
            k: 3,
            drop_fractions: (1..=9).map(|i| i as f64 / 10.0).collect(),
            repeats: 50,
            tolerance: 1e-6,
            max_iter: 1000,
            folds: 5,
            seed: 0,
        }
    }
}

impl PllConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha = {} must be in (0, 1)", self.alpha));
        }
        if let Some(p) = self.drop_fractions.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return bad(format!("drop fraction {p} must be in (0, 1)"));
        }
        if self.repeats == 0 || self.k == 0 || self.k_candidates.contains(&0) || self.folds < 2 {
            return bad("repeats, k, and every candidate k must be ≥ 1; folds ≥ 2".into());
        }
        Ok(())
    }
}

/// Neighbor lists of every row, nearest first (lower index on ties),
/// up to some maximum `k`. Building once lets any smaller `k` reuse it.
#[derive(Debug, Clone)]
pub struct NeighborTable {
    k: usize,
    lists: Vec<Vec<usize>>,
}

impl NeighborTable {
    pub fn build(matrix: &FeatureMatrix, k: usize) -> Self {
        let n = matrix.n_rows();
        let k = k.min(n.saturating_sub(1));
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        let lists = (0..n)
            .into_par_iter()
            .map(|i| {
                if k == 0 {
                    return Vec::new();
                }
                let xi = matrix.row(i);
                let mut cands: Vec<(f64, usize)> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| (squared_distance(xi, matrix.row(j)), j))
                    .collect();
                if k < cands.len() {
                    cands.select_nth_unstable_by(k - 1, cmp);
                    cands.truncate(k);
                }
                cands.sort_unstable_by(cmp);
                cands.into_iter().map(|c| c.1).collect()
            })
            .collect();
        Self { k, lists }
    }

    pub fn max_k(&self) -> usize {
        self.k
    }

    /// Row-normalized transition matrix of the `k`-NN graph, symmetrized by
    /// taking the larger of the two directed edge weights (unit weights).
    pub fn graph(&self, k: usize) -> Result<Graph> {
        if k > self.k {
            return Err(Error::InvalidParameter(format!(
                "k = {k} exceeds table size {}",
                self.k
            )));
        }
        let n = self.lists.len();
        let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (i, list) in self.lists.iter().enumerate() {
            for &j in &list[..k] {
                adj[i].push(j as u32);
                adj[j].push(i as u32);
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for mut a in adj {
            a.sort_unstable();
            a.dedup();
            targets.extend(a);
            offsets.push(targets.len());
        }
        Ok(Graph { offsets, targets })
    }
}

/// Undirected unit-weight graph; each row of the transition matrix spreads
/// mass evenly over a node's neighbors.
#[derive(Debug, Clone)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<u32>,
}

impl Graph {
    pub fn n_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Connected-component id per node.
    pub fn components(&self) -> Vec<usize> {
        let n = self.n_nodes();
        let mut comp = vec![usize::MAX; n];
        let mut next = 0;
        let mut stack = Vec::new();
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            comp[s] = next;
            stack.push(s);
            while let Some(u) = stack.pop() {
                for &v in self.neighbors(u) {
                    let v = v as usize;
                    if comp[v] == usize::MAX {
                        comp[v] = next;
                        stack.push(v);
                    }
                }
            }
            next += 1;
        }
        comp
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Propagation {
    pub labels: Vec<u8>,
    /// Winning share of the row's soft label.
    pub confidence: Vec<f64>,
    /// In a component without any labeled row; given the global majority label.
    pub unreachable: Vec<bool>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest absolute soft-label change per iteration.
    pub max_changes: Vec<f64>,
}

/// Nodes of a union of whole components, renumbered `0..len`. Neighbor
/// lists keep their order so every sum is formed exactly as on the full graph.
struct Subgraph {
    nodes: Vec<usize>,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    inv_deg: Vec<f64>,
}

impl Subgraph {
    /// `scratch` maps global to local ids and must have one slot per node.
    fn induced(graph: &Graph, nodes: Vec<usize>, scratch: &mut [u32]) -> Self {
        for (l, &i) in nodes.iter().enumerate() {
            scratch[i] = l as u32;
        }
        let mut offsets = Vec::with_capacity(nodes.len() + 1);
        let mut targets = Vec::new();
        let mut inv_deg = Vec::with_capacity(nodes.len());
        offsets.push(0);
        for &i in &nodes {
            let nb = graph.neighbors(i);
            targets.extend(nb.iter().map(|&j| scratch[j as usize]));
            offsets.push(targets.len());
            inv_deg.push(if nb.is_empty() { 0.0 } else { 1.0 / nb.len() as f64 });
        }
        Self {
            nodes,
            offsets,
            targets,
            inv_deg,
        }
    }
}

struct Iterated {
    /// Soft labels `[class 0, class 1]` per local node.
    f: Vec<[f64; 2]>,
    max_changes: Vec<f64>,
    converged: bool,
}

/// The propagation loop on `sub`. `clamp[l]` is the one-hot label of a
/// labeled node. `outside(t)` is the largest change at iteration `t` among
/// nodes not in `sub`; it enters the stopping rule.
fn iterate(sub: &Subgraph, clamp: &[Option<[f64; 2]>], config: &PllConfig, outside: impl Fn(usize) -> f64) -> Iterated {
    let alpha = config.alpha;
    let mut f: Vec<[f64; 2]> = clamp.iter().map(|c| c.unwrap_or([0.0; 2])).collect();
    let mut g = vec![[0.0; 2]; f.len()];
    let mut max_changes = Vec::new();
    let mut converged = false;
    for t in 0..config.max_iter {
        let mut change = outside(t);
        for (l, out) in g.iter_mut().enumerate() {
            let (mut t0, mut t1) = (0.0, 0.0);
            for &j in &sub.targets[sub.offsets[l]..sub.offsets[l + 1]] {
                let v = f[j as usize];
                t0 += v[0];
                t1 += v[1];
            }
            t0 *= sub.inv_deg[l];
            t1 *= sub.inv_deg[l];
            if let Some(y) = clamp[l] {
                t0 = (1.0 - alpha) * y[0] + alpha * t0;
                t1 = (1.0 - alpha) * y[1] + alpha * t1;
            }
            change = change.max((t0 - f[l][0]).abs()).max((t1 - f[l][1]).abs());
            *out = [t0, t1];
        }
        std::mem::swap(&mut f, &mut g);
        max_changes.push(change);
        // A change of exactly 0 is a fixpoint: nothing moves any more.
        if change < config.tolerance || change == 0.0 {
            converged = true;
            break;
        }
    }
    Iterated {
        f,
        max_changes,
        converged,
    }
}

fn one_hot(y: u8) -> [f64; 2] {
    if y == 1 {
        [0.0, 1.0]
    } else {
        [1.0, 0.0]
    }
}

fn check_classes(seen: [usize; 2]) -> Result<()> {
    for class in 0..2u8 {
        if seen[usize::from(class)] == 0 {
            return Err(Error::MissingClass { class });
        }
    }
    Ok(())
}

/// Argmax label (ties → 0) and its share of the soft label.
fn decide(a: f64, b: f64) -> (u8, f64) {
    (u8::from(b > a), if a + b > 0.0 { a.max(b) / (a + b) } else { 0.0 })
}

/// Propagates `partial` labels (`None` = hidden) over `graph`:
/// `F ← T·F`, after which labeled rows are reset to `(1 − α)·Y₀ + α·(T·F)`.
/// Hidden rows start at zero. Stops when no entry moves by more than
/// `tolerance`.
pub fn propagate_on_graph(graph: &Graph, partial: &[Option<u8>], config: &PllConfig) -> Result<Propagation> {
    let n = graph.n_nodes();
    if partial.len() != n {
        return Err(Error::Dimension(format!("{} labels for {n} nodes", partial.len())));
    }
    let mut seen = [0usize; 2];
    for y in partial.iter().flatten() {
        if *y > 1 {
            return Err(Error::InvalidParameter(format!("label {y} is not binary")));
        }
        seen[usize::from(*y)] += 1;
    }
    check_classes(seen)?;
    let sub = Subgraph::induced(graph, (0..n).collect(), &mut vec![0; n]);
    let clamp: Vec<Option<[f64; 2]>> = partial.iter().map(|y| y.map(one_hot)).collect();
    let run = iterate(&sub, &clamp, config, |_| 0.0);

    let comp = graph.components();
    let mut comp_labeled = vec![false; n];
    for i in 0..n {
        if partial[i].is_some() {
            comp_labeled[comp[i]] = true;
        }
    }
    let majority = u8::from(seen[1] > seen[0]);
    let mut out = Propagation {
        labels: Vec::with_capacity(n),
        confidence: Vec::with_capacity(n),
        unreachable: Vec::with_capacity(n),
        iterations: run.max_changes.len(),
        converged: run.converged,
        max_changes: run.max_changes,
    };
    for i in 0..n {
        let (label, conf, lost) = match partial[i] {
            Some(y) => (y, 1.0, false),
            None if !comp_labeled[comp[i]] => (majority, 0.0, true),
            None => {
                let (l, c) = decide(run.f[i][0], run.f[i][1]);
                (l, c, false)
            }
        };
        out.labels.push(label);
        out.confidence.push(conf);
        out.unreachable.push(lost);
    }
    Ok(out)
}

/// Repeated propagation over one graph where every row keeps its true label
/// except a hidden set. Components never exchange mass, so only components
/// holding hidden rows are iterated; the change sequences of the fully
/// labeled components are computed once and enter the stopping rule. Every
/// result is bit-identical to [`propagate_on_graph`] with the same labels.
pub struct HiddenPropagator<'a> {
    graph: &'a Graph,
    truth: &'a [u8],
    config: &'a PllConfig,
    comp: Vec<usize>,
    members: Vec<Vec<usize>>,
    /// Per component, the largest change per iteration with every row
    /// labeled, cut after the last nonzero entry.
    traces: Vec<Vec<f64>>,
    /// Component ids by decreasing trace length.
    by_trace: Vec<usize>,
    counts: [usize; 2],
}

impl<'a> HiddenPropagator<'a> {
    pub fn new(graph: &'a Graph, truth: &'a [u8], config: &'a PllConfig) -> Result<Self> {
        let n = graph.n_nodes();
        if truth.len() != n {
            return Err(Error::Dimension(format!("{} labels for {n} nodes", truth.len())));
        }
        if let Some(y) = truth.iter().find(|&&y| y > 1) {
            return Err(Error::InvalidParameter(format!("label {y} is not binary")));
        }
        let comp = graph.components();
        let n_comp = comp.iter().max().map_or(0, |c| c + 1);
        let mut members = vec![Vec::new(); n_comp];
        for (i, &c) in comp.iter().enumerate() {
            members[c].push(i);
        }
        let mut scratch = vec![0u32; n];
        let full_trace = PllConfig {
            tolerance: 0.0,
            ..config.clone()
        };
        let traces: Vec<Vec<f64>> = members
            .iter()
            .map(|nodes| {
                let sub = Subgraph::induced(graph, nodes.clone(), &mut scratch);
                let clamp: Vec<Option<[f64; 2]>> = nodes.iter().map(|&i| Some(one_hot(truth[i]))).collect();
                let mut trace = iterate(&sub, &clamp, &full_trace, |_| 0.0).max_changes;
                let keep = trace.iter().rposition(|&c| c != 0.0).map_or(0, |p| p + 1);
                trace.truncate(keep);
                trace
            })
            .collect();
        let mut by_trace: Vec<usize> = (0..n_comp).collect();
        by_trace.sort_by(|&a, &b| traces[b].len().cmp(&traces[a].len()).then(a.cmp(&b)));
        let mut counts = [0usize; 2];
        for &y in truth {
            counts[usize::from(y)] += 1;
        }
        Ok(Self {
            graph,
            truth,
            config,
            comp,
            members,
            traces,
            by_trace,
            counts,
        })
    }

    /// Propagation with the labels of `hidden` (distinct row ids) removed.
    pub fn propagate(&self, hidden: &[usize]) -> Result<Propagation> {
        let n = self.truth.len();
        let mut is_hidden = vec![false; n];
        let mut seen = self.counts;
        for &i in hidden {
            if i >= n || is_hidden[i] {
                return Err(Error::InvalidParameter(format!(
                    "hidden row {i} is out of range or repeated"
                )));
            }
            is_hidden[i] = true;
            seen[usize::from(self.truth[i])] -= 1;
        }
        check_classes(seen)?;

        let mut active = vec![false; self.members.len()];
        let mut hidden_in = vec![0usize; self.members.len()];
        for &i in hidden {
            active[self.comp[i]] = true;
            hidden_in[self.comp[i]] += 1;
        }
        let nodes: Vec<usize> = (0..self.members.len())
            .filter(|&c| active[c])
            .flat_map(|c| self.members[c].iter().copied())
            .collect();
        let sub = Subgraph::induced(self.graph, nodes, &mut vec![0; n]);
        let clamp: Vec<Option<[f64; 2]>> = sub
            .nodes
            .iter()
            .map(|&i| (!is_hidden[i]).then(|| one_hot(self.truth[i])))
            .collect();
        let outside = |t: usize| {
            self.by_trace
                .iter()
                .take_while(|&&c| self.traces[c].len() > t)
                .filter(|&&c| !active[c])
                .fold(0.0, |m: f64, &c| m.max(self.traces[c][t]))
        };
        let run = iterate(&sub, &clamp, self.config, outside);

        let majority = u8::from(seen[1] > seen[0]);
        let mut out = Propagation {
            labels: self.truth.to_vec(),
            confidence: vec![1.0; n],
            unreachable: vec![false; n],
            iterations: run.max_changes.len(),
            converged: run.converged,
            max_changes: run.max_changes,
        };
        for (l, &i) in sub.nodes.iter().enumerate() {
            if !is_hidden[i] {
                continue;
            }
            let c = self.comp[i];
            if hidden_in[c] == self.members[c].len() {
                out.labels[i] = majority;
                out.confidence[i] = 0.0;
                out.unreachable[i] = true;
            } else {
                (out.labels[i], out.confidence[i]) = decide(run.f[l][0], run.f[l][1]);
            }
        }
        Ok(out)
    }
}

/// Builds the `config.k` graph over `matrix` and propagates.
pub fn propagate_labels(matrix: &FeatureMatrix, partial: &[Option<u8>], config: &PllConfig) -> Result<Propagation> {
    let graph = NeighborTable::build(matrix, config.k).graph(config.k.min(matrix.n_rows().saturating_sub(1)))?;
    propagate_on_graph(&graph, partial, config)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KSelection {
    pub chosen_k: usize,
    /// `(k, mean held-out misclassification rate)` for every candidate.
    pub errors: Vec<(usize, f64)>,
}

/// Picks the candidate `k` with the lowest mean error over `folds`-fold
/// cross-validation, where each held-out fold's labels are hidden and
/// recovered by propagation. Ties go to the smaller `k`.
pub fn select_k(matrix: &FeatureMatrix, config: &PllConfig) -> Result<KSelection> {
    config.validate()?;
    let n = matrix.n_rows();
    if n < 10 || n < 2 * config.folds {
        return Err(Error::InvalidParameter(format!(
            "{n} samples are too few for {}-fold cross-validation",
            config.folds
        )));
    }
    let mut ks = config.k_candidates.clone();
    ks.sort_unstable();
    ks.dedup();
    let k_max = *ks.last().expect("validated non-empty");
    if k_max >= n {
        return Err(Error::InvalidParameter(format!(
            "k = {k_max} needs more than {n} samples"
        )));
    }
    let table = NeighborTable::build(matrix, k_max);
    let order = shuffled(n, derive_seed(config.seed, &[u64::MAX]));
    let folds: Vec<&[usize]> = (0..config.folds)
        .map(|f| &order[f * n / config.folds..(f + 1) * n / config.folds])
        .collect();
    let truth = matrix.labels();
    let mut errors = Vec::with_capacity(ks.len());
    for &k in &ks {
        let graph = table.graph(k)?;
        let propagator = HiddenPropagator::new(&graph, truth, config)?;
        let per_fold: Vec<f64> = folds
            .par_iter()
            .map(|fold| {
                let prop = propagator.propagate(fold)?;
                let wrong = fold.iter().filter(|&&i| prop.labels[i] != truth[i]).count();
                Ok(wrong as f64 / fold.len() as f64)
            })
            .collect::<Result<_>>()?;
        errors.push((k, per_fold.iter().sum::<f64>() / per_fold.len() as f64));
    }
    let chosen_k = errors
        .iter()
        .fold(None::<(usize, f64)>, |best, &(k, e)| match best {
            Some((_, be)) if be <= e => best,
            _ => Some((k, e)),
        })
        .expect("at least one candidate")
        .0;
    Ok(KSelection { chosen_k, errors })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PllCell {
    pub cluster: usize,
    pub p: f64,
    pub n_cluster: usize,
    pub n_dropped: usize,
    /// Repetitions that could run; the rest hid every label of some class.
    pub repeats_used: usize,
    pub mean_accuracy: Option<f64>,
    pub sd_accuracy: Option<f64>,
    pub mean_f1: Option<f64>,
    pub sd_f1: Option<f64>,
    /// Some repetition could not run.
    pub gap: bool,
    /// Hidden rows no labeled row could reach, summed over repetitions.
    pub unreachable: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PllCurve {
    pub k: usize,
    pub alpha: f64,
    pub repeats: usize,
    pub cells: Vec<PllCell>,
}

fn mean_sd(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (Some(mean), Some(sd))
}

/// For every cluster and drop fraction `p`: hide `⌈p·n_q⌉` labels chosen at
/// random inside the cluster, propagate over the whole matrix, and score
/// the recovered labels of the hidden rows. Repetition `r` of cell
/// `(q, p_i)` is seeded from `(seed, q, i, r)`.
pub fn robustness_sweep(matrix: &FeatureMatrix, config: &PllConfig) -> Result<PllCurve> {
    config.validate()?;
    let groups = matrix.cluster_members()?;
    if let Some(q) = groups.iter().position(|g| g.is_empty()) {
        return Err(Error::InvalidParameter(format!("cluster {q} is empty")));
    }
    if config.k >= matrix.n_rows() {
        return Err(Error::InvalidParameter(format!("k = {} needs more samples", config.k)));
    }
    let graph = NeighborTable::build(matrix, config.k).graph(config.k)?;
    let truth = matrix.labels();
    let propagator = HiddenPropagator::new(&graph, truth, config)?;

    let jobs: Vec<(usize, usize, usize)> = (0..groups.len())
        .flat_map(|q| (0..config.drop_fractions.len()).flat_map(move |pi| (0..config.repeats).map(move |r| (q, pi, r))))
        .collect();
    let outcomes: Vec<Option<(f64, f64, usize)>> = jobs
        .par_iter()
        .map(|&(q, pi, r)| {
            let members = &groups[q];
            let n_drop = (config.drop_fractions[pi] * members.len() as f64 - 1e-9).ceil() as usize;
            let seed = derive_seed(config.seed, &[q as u64, pi as u64, r as u64]);
            let order = shuffled(members.len(), seed);
            let hidden: Vec<usize> = order[..n_drop].iter().map(|&o| members[o]).collect();
            match propagator.propagate(&hidden) {
                Ok(prop) => {
                    let pred: Vec<u8> = hidden.iter().map(|&i| prop.labels[i]).collect();
                    let real: Vec<u8> = hidden.iter().map(|&i| truth[i]).collect();
                    let (_, m) = evaluate(&pred, &real)?;
                    let unreachable = hidden.iter().filter(|&&i| prop.unreachable[i]).count();
                    Ok(Some((m.accuracy, m.f1, unreachable)))
                }
                Err(Error::MissingClass { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;

    let cells = outcomes
        .chunks(config.repeats)
        .enumerate()
        .map(|(c, reps)| {
            let (q, pi) = (c / config.drop_fractions.len(), c % config.drop_fractions.len());
            let ok: Vec<(f64, f64, usize)> = reps.iter().flatten().copied().collect();
            let acc: Vec<f64> = ok.iter().map(|o| o.0).collect();
            let f1: Vec<f64> = ok.iter().map(|o| o.1).collect();
            let (mean_accuracy, sd_accuracy) = mean_sd(&acc);
            let (mean_f1, sd_f1) = mean_sd(&f1);
            let p = config.drop_fractions[pi];
            PllCell {
                cluster: q,
                p,
                n_cluster: groups[q].len(),
                n_dropped: (p * groups[q].len() as f64 - 1e-9).ceil() as usize,
                repeats_used: ok.len(),
                mean_accuracy,
                sd_accuracy,
                mean_f1,
                sd_f1,
                gap: ok.len() < reps.len(),
                unreachable: ok.iter().map(|o| o.2).sum(),
            }
        })
        .collect();
    Ok(PllCurve {
        k: config.k,
        alpha: config.alpha,
        repeats: config.repeats,
        cells,
    })
}

impl PllCurve {
    /// Cells of one cluster, in drop-fraction order.
    pub fn cluster(&self, q: usize) -> Vec<&PllCell> {
        self.cells.iter().filter(|c| c.cluster == q).collect()
    }

    /// `cluster,p,mean_acc,sd_acc,mean_f1,sd_f1,n_dropped,repeats_used,gap`;
    /// statistics are empty where no repetition could run.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "cluster",
            "p",
            "mean_acc",
            "sd_acc",
            "mean_f1",
            "sd_f1",
            "n_dropped",
            "repeats_used",
            "gap",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for c in &self.cells {
            w.write_record([
                c.cluster.to_string(),
                c.p.to_string(),
                opt(c.mean_accuracy),
                opt(c.sd_accuracy),
                opt(c.mean_f1),
                opt(c.sd_f1),
                c.n_dropped.to_string(),
                c.repeats_used.to_string(),
                c.gap.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<pll csv>", e))?;
        Ok(())
    }
}

/// Spearman rank correlation with average ranks for ties; `None` when
/// either side is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    (vx > 0.0 && vy > 0.0).then(|| cov / (vx * vy).sqrt())
}
