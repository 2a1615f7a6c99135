//! Core lattice data model.
//!
//! A [`Lattice`] is an immutable, validated word graph: acyclic, trimmed
//! (every state lies on a path from the start to a final state), and
//! deterministic as a word acceptor (no state has two outgoing arcs with
//! the same word). Construction goes through [`LatticeBuilder`], which
//! canonicalizes: states are renumbered in topological order with the
//! start at 0, and outgoing arcs are sorted by word. Two lattices with
//! the same language and weights therefore serialize identically.
//!
//! All costs are negative natural-log probabilities (nats). An arc's
//! weight is split into a graph (language model) part and an acoustic
//! part so that rescoring can replace the LM portion alone.

mod text;

pub use text::{lattice_to_string, parse_archive, parse_lattice, write_archive, ArchiveEntry};

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use crate::{Error, Result};

/// Reserved token: epsilon. Rejected on arcs by the parser; lattices are
/// assumed epsilon-free.
pub const EPS: &str = "<eps>";
/// Reserved token: sentence start. Structural; never part of a hypothesis.
pub const BOS: &str = "<s>";
/// Reserved token: sentence end. Structural; never part of a hypothesis.
pub const EOS: &str = "</s>";
/// Reserved token: unknown word, the OOV target for scorers.
pub const UNK: &str = "<unk>";

/// Dense state index, 0-based. After canonicalization the start state is
/// 0 and every arc goes from a lower to a higher index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateId(pub u32);

impl StateId {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Interned word label. Ids 0..=3 are the reserved tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WordId(pub u32);

impl WordId {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

/// Dense arc index over the whole lattice, in (source state, arc
/// position) order. Stable for a given canonical lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ArcId(pub u32);

impl ArcId {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ArcId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Per-lattice word interner.
#[derive(Debug, Clone, Default)]
pub struct SymbolTable {
    names: Vec<String>,
    index: HashMap<String, WordId>,
}

impl SymbolTable {
    pub fn new() -> Self {
        let mut table = SymbolTable {
            names: Vec::new(),
            index: HashMap::new(),
        };
        for reserved in [EPS, BOS, EOS, UNK] {
            table.intern(reserved);
        }
        table
    }

    pub fn intern(&mut self, name: &str) -> WordId {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = WordId(self.names.len() as u32);
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<WordId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: WordId) -> &str {
        &self.names[id.idx()]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Structural tokens delimit or pad hypotheses and are excluded from
    /// word sequences handed to scorers.
    pub fn is_structural(&self, id: WordId) -> bool {
        matches!(self.name(id), EPS | BOS | EOS)
    }
}

/// A labeled weighted transition. Costs are in nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub word: WordId,
    pub graph_cost: f64,
    pub acoustic_cost: f64,
    pub num_frames: u32,
    pub next_state: StateId,
}

impl Arc {
    /// Combined arc cost (graph + acoustic).
    pub fn cost(&self) -> f64 {
        self.graph_cost + self.acoustic_cost
    }

    /// Arc log-probability: the negated combined cost.
    pub fn log_prob(&self) -> f64 {
        -self.cost()
    }
}

/// Validated, canonical word lattice. Immutable after construction; all
/// operations are pure functions returning new lattices, so sharing a
/// `&Lattice` across threads is safe.
#[derive(Debug, Clone)]
pub struct Lattice {
    symbols: SymbolTable,
    arcs: Vec<Vec<Arc>>,
    final_costs: BTreeMap<StateId, f64>,
    /// `arc_offsets[s]` is the ArcId of state s's first outgoing arc.
    arc_offsets: Vec<u32>,
    /// Source state of each arc, indexed by ArcId.
    arc_src: Vec<StateId>,
}

impl Lattice {
    pub fn start(&self) -> StateId {
        StateId(0)
    }

    pub fn num_states(&self) -> usize {
        self.arcs.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.arc_src.len()
    }

    pub fn symbols(&self) -> &SymbolTable {
        &self.symbols
    }

    pub fn word_name(&self, id: WordId) -> &str {
        self.symbols.name(id)
    }

    /// Outgoing arcs of a state, sorted by word.
    pub fn out(&self, state: StateId) -> &[Arc] {
        &self.arcs[state.idx()]
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> {
        (0..self.num_states() as u32).map(StateId)
    }

    pub fn arc_ids(&self) -> impl Iterator<Item = ArcId> {
        (0..self.num_arcs() as u32).map(ArcId)
    }

    /// ArcId of the `pos`-th outgoing arc of `state`.
    pub fn arc_id(&self, state: StateId, pos: usize) -> ArcId {
        ArcId(self.arc_offsets[state.idx()] + pos as u32)
    }

    /// Source state and arc payload for an ArcId.
    pub fn arc(&self, id: ArcId) -> (StateId, &Arc) {
        let src = self.arc_src[id.idx()];
        let pos = id.0 - self.arc_offsets[src.idx()];
        (src, &self.arcs[src.idx()][pos as usize])
    }

    /// Arcs of a state together with their ids.
    pub fn out_with_ids(&self, state: StateId) -> impl Iterator<Item = (ArcId, &Arc)> {
        let base = self.arc_offsets[state.idx()];
        self.arcs[state.idx()]
            .iter()
            .enumerate()
            .map(move |(i, a)| (ArcId(base + i as u32), a))
    }

    pub fn final_cost(&self, state: StateId) -> Option<f64> {
        self.final_costs.get(&state).copied()
    }

    pub fn is_final(&self, state: StateId) -> bool {
        self.final_costs.contains_key(&state)
    }

    pub fn finals(&self) -> impl Iterator<Item = (StateId, f64)> + '_ {
        self.final_costs.iter().map(|(&s, &c)| (s, c))
    }

    /// Compare two word id sequences by their string names.
    pub fn cmp_word_seqs(&self, a: &[WordId], b: &[WordId]) -> Ordering {
        let la = a.iter().map(|&w| self.word_name(w));
        let lb = b.iter().map(|&w| self.word_name(w));
        la.cmp(lb)
    }

    /// Sum of num_frames over all arcs.
    pub fn total_arc_frames(&self) -> u64 {
        self.arc_src
            .iter()
            .enumerate()
            .map(|(i, _)| self.arc(ArcId(i as u32)).1.num_frames as u64)
            .sum()
    }

    /// Frame length of the lattice: the maximum over complete paths of
    /// the summed arc frame counts.
    pub fn max_path_frames(&self) -> u64 {
        let n = self.num_states();
        let mut best: Vec<Option<u64>> = vec![None; n];
        best[0] = Some(0);
        let mut result = 0u64;
        for s in 0..n {
            let Some(here) = best[s] else { continue };
            if self.is_final(StateId(s as u32)) {
                result = result.max(here);
            }
            for arc in &self.arcs[s] {
                let cand = here + arc.num_frames as u64;
                let slot = &mut best[arc.next_state.idx()];
                if slot.is_none_or(|v| cand > v) {
                    *slot = Some(cand);
                }
            }
        }
        result
    }

    /// Mean number of arcs crossing a frame: total arc frames divided by
    /// the lattice frame length.
    pub fn depth(&self) -> f64 {
        let frames = self.max_path_frames();
        if frames == 0 {
            return 0.0;
        }
        self.total_arc_frames() as f64 / frames as f64
    }

    /// Enumerate every complete path, sorted ascending by cost with ties
    /// broken by the lexicographic word sequence. Errors out as soon as
    /// more than `limit` paths exist.
    pub fn enumerate_paths(&self, limit: usize) -> Result<Vec<Path>> {
        let mut paths = Vec::new();
        let mut stack: Vec<ArcId> = Vec::new();
        self.enumerate_rec(self.start(), 0.0, &mut stack, limit, &mut paths)?;
        paths.sort_by(|a, b| self.cmp_paths(a, b));
        Ok(paths)
    }

    fn enumerate_rec(
        &self,
        state: StateId,
        cost: f64,
        stack: &mut Vec<ArcId>,
        limit: usize,
        paths: &mut Vec<Path>,
    ) -> Result<()> {
        if let Some(fc) = self.final_cost(state) {
            if paths.len() >= limit {
                return Err(Error::TooManyPaths { limit });
            }
            paths.push(Path {
                arcs: stack.clone(),
                cost: cost + fc,
            });
        }
        for (id, arc) in self.out_with_ids(state) {
            stack.push(id);
            self.enumerate_rec(arc.next_state, cost + arc.cost(), stack, limit, paths)?;
            stack.pop();
        }
        Ok(())
    }

    /// Path ordering used everywhere: ascending cost, then lexicographic
    /// word sequence, then arc ids.
    pub fn cmp_paths(&self, a: &Path, b: &Path) -> Ordering {
        fcmp(a.cost, b.cost)
            .then_with(|| self.cmp_word_seqs(&a.words(self), &b.words(self)))
            .then_with(|| a.arcs.cmp(&b.arcs))
    }

    /// Rewrite graph costs in place, keeping everything else (words,
    /// frames, acoustics, structure) bit-identical. Used by score
    /// merging, which must not disturb arc identity.
    pub(crate) fn remap_costs(&mut self, mut f: impl FnMut(ArcId, &Arc) -> f64) {
        for s in 0..self.arcs.len() {
            let base = self.arc_offsets[s];
            for (i, arc) in self.arcs[s].iter_mut().enumerate() {
                let g = f(ArcId(base + i as u32), arc);
                arc.graph_cost = g;
            }
        }
    }

    /// Rewrite final costs in place.
    pub(crate) fn remap_finals(&mut self, mut f: impl FnMut(StateId, f64) -> f64) {
        let updated: BTreeMap<StateId, f64> = self
            .final_costs
            .iter()
            .map(|(&s, &c)| (s, f(s, c)))
            .collect();
        self.final_costs = updated;
    }

    /// Beam pruning: drop every arc and final stop whose best complete
    /// path through it costs more than `best + beam`, then re-trim.
    ///
    /// The global best path always survives; with beam 0 only cost-equal
    /// best paths remain. Pruning is per-arc, so a path gluing together
    /// arcs that are each within beam via *other* paths can survive even
    /// when its own total exceeds the threshold.
    pub fn prune(&self, beam: f64) -> Result<Lattice> {
        if beam < 0.0 || !beam.is_finite() {
            return Err(Error::Config(format!("beam must be finite and >= 0, got {beam}")));
        }
        let fb = crate::viterbi::forward_backward(self, crate::viterbi::Semiring::Max);
        // Log-prob space: through(e) = alpha[src] + lp(e) + beta[dst];
        // cost = -through. Threshold on cost = best_cost + beam.
        let best_cost = -fb.beta[0];
        let threshold = best_cost + beam;

        let mut builder = LatticeBuilder::with_symbols(self.symbols.clone());
        for _ in 0..self.num_states() {
            builder.add_state();
        }
        for s in self.states() {
            for arc in self.out(s) {
                let through =
                    -(fb.alpha[s.idx()] + arc.log_prob() + fb.beta[arc.next_state.idx()]);
                if through <= threshold {
                    builder.add_arc(s, arc.word, arc.graph_cost, arc.acoustic_cost, arc.num_frames, arc.next_state);
                }
            }
            if let Some(fc) = self.final_cost(s) {
                let stop_cost = -fb.alpha[s.idx()] + fc;
                if stop_cost <= threshold {
                    builder.set_final(s, fc);
                }
            }
        }
        builder.finish().map(|t| t.lattice)
    }
}

/// A complete path: ordered arc ids from the start to a final state,
/// with the total cost (arc graph + acoustic costs plus the final cost).
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub arcs: Vec<ArcId>,
    pub cost: f64,
}

impl Path {
    /// Raw word sequence, including structural tokens.
    pub fn words(&self, lat: &Lattice) -> Vec<WordId> {
        self.arcs.iter().map(|&id| lat.arc(id).1.word).collect()
    }

    /// Hypothesis word strings: structural tokens excluded.
    pub fn hypothesis_words(&self, lat: &Lattice) -> Vec<String> {
        self.arcs
            .iter()
            .map(|&id| lat.arc(id).1.word)
            .filter(|&w| !lat.symbols().is_structural(w))
            .map(|w| lat.word_name(w).to_string())
            .collect()
    }

    /// State the path ends in (the start state for an empty path).
    pub fn end_state(&self, lat: &Lattice) -> StateId {
        self.arcs
            .last()
            .map(|&id| lat.arc(id).1.next_state)
            .unwrap_or(lat.start())
    }

    /// Recompute the cost from components; `cost` must match within
    /// 1e-9 relative tolerance.
    pub fn component_cost(&self, lat: &Lattice) -> f64 {
        let arcs: f64 = self.arcs.iter().map(|&id| lat.arc(id).1.cost()).sum();
        arcs + lat.final_cost(self.end_state(lat)).unwrap_or(f64::INFINITY)
    }

    /// Sum of the graph costs plus the final cost (the LM portion).
    pub fn graph_cost(&self, lat: &Lattice) -> f64 {
        let arcs: f64 = self.arcs.iter().map(|&id| lat.arc(id).1.graph_cost).sum();
        arcs + lat.final_cost(self.end_state(lat)).unwrap_or(0.0)
    }

    /// Sum of the acoustic costs.
    pub fn acoustic_cost(&self, lat: &Lattice) -> f64 {
        self.arcs.iter().map(|&id| lat.arc(id).1.acoustic_cost).sum()
    }
}

/// Total order for finite costs.
pub(crate) fn fcmp(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).expect("costs are finite")
}

/// Outcome of building a lattice: the canonical lattice plus the number
/// of states dropped by trimming (surfaced as a warning upstream).
#[derive(Debug)]
pub struct Trimmed {
    pub lattice: Lattice,
    pub trimmed_states: usize,
}

/// Mutable construction buffer. `finish` validates (acyclicity,
/// determinism), trims unreachable and dead-end states, renumbers states
/// topologically, and sorts arcs per state by word.
#[derive(Debug, Clone)]
pub struct LatticeBuilder {
    symbols: SymbolTable,
    arcs: Vec<Vec<Arc>>,
    final_costs: BTreeMap<StateId, f64>,
}

impl Default for LatticeBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl LatticeBuilder {
    pub fn new() -> Self {
        LatticeBuilder {
            symbols: SymbolTable::new(),
            arcs: Vec::new(),
            final_costs: BTreeMap::new(),
        }
    }

    /// Start from an existing symbol table (derived lattices keep the
    /// word ids of their source).
    pub fn with_symbols(symbols: SymbolTable) -> Self {
        LatticeBuilder {
            symbols,
            arcs: Vec::new(),
            final_costs: BTreeMap::new(),
        }
    }

    pub fn intern(&mut self, word: &str) -> WordId {
        self.symbols.intern(word)
    }

    pub fn symbols(&self) -> &SymbolTable {
        &self.symbols
    }

    pub fn num_states(&self) -> usize {
        self.arcs.len()
    }

    pub fn add_state(&mut self) -> StateId {
        self.arcs.push(Vec::new());
        StateId(self.arcs.len() as u32 - 1)
    }

    /// Make sure states 0..=id exist.
    pub fn ensure_state(&mut self, id: StateId) {
        while self.arcs.len() <= id.idx() {
            self.arcs.push(Vec::new());
        }
    }

    pub fn add_arc(
        &mut self,
        src: StateId,
        word: WordId,
        graph_cost: f64,
        acoustic_cost: f64,
        num_frames: u32,
        dst: StateId,
    ) {
        self.ensure_state(src);
        self.ensure_state(dst);
        self.arcs[src.idx()].push(Arc {
            word,
            graph_cost,
            acoustic_cost,
            num_frames,
            next_state: dst,
        });
    }

    pub fn set_final(&mut self, state: StateId, cost: f64) {
        self.ensure_state(state);
        self.final_costs.insert(state, cost);
    }

    /// Validate and canonicalize. State 0 is the start state.
    pub fn finish(self) -> Result<Trimmed> {
        let n = self.arcs.len();
        if n == 0 {
            return Err(Error::NoCompletePath);
        }

        // Determinism check on the raw graph, before trimming.
        for (s, arcs) in self.arcs.iter().enumerate() {
            let mut seen: HashMap<WordId, ()> = HashMap::with_capacity(arcs.len());
            for arc in arcs {
                if seen.insert(arc.word, ()).is_some() {
                    return Err(Error::Nondeterminism {
                        state: s as u32,
                        word: self.symbols.name(arc.word).to_string(),
                    });
                }
            }
        }

        // Forward reachability from the start.
        let mut fwd = vec![false; n];
        let mut stack = vec![0usize];
        fwd[0] = true;
        while let Some(s) = stack.pop() {
            for arc in &self.arcs[s] {
                let t = arc.next_state.idx();
                if !fwd[t] {
                    fwd[t] = true;
                    stack.push(t);
                }
            }
        }
        // Backward reachability from final states.
        let mut radj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (s, arcs) in self.arcs.iter().enumerate() {
            for arc in arcs {
                radj[arc.next_state.idx()].push(s);
            }
        }
        let mut bwd = vec![false; n];
        let mut stack: Vec<usize> = self
            .final_costs
            .keys()
            .map(|s| s.idx())
            .filter(|&s| s < n)
            .collect();
        for &s in &stack {
            bwd[s] = true;
        }
        while let Some(s) = stack.pop() {
            for &p in &radj[s] {
                if !bwd[p] {
                    bwd[p] = true;
                    stack.push(p);
                }
            }
        }

        let keep: Vec<bool> = (0..n).map(|s| fwd[s] && bwd[s]).collect();
        if !keep[0] {
            return Err(Error::NoCompletePath);
        }
        let trimmed_states = keep.iter().filter(|&&k| !k).count();

        // Kahn over the kept subgraph. The ready heap is keyed by the
        // smallest (new id of predecessor, word) over a state's incoming
        // arcs — a value that exists once all predecessors are numbered
        // and is unique per state in a deterministic lattice — so the
        // numbering depends only on the labeled graph, not on input
        // state ids. The start state is the unique kept state with
        // in-degree 0 and goes first.
        let mut indeg = vec![0usize; n];
        for (s, arcs) in self.arcs.iter().enumerate() {
            if !keep[s] {
                continue;
            }
            for arc in arcs {
                if keep[arc.next_state.idx()] {
                    indeg[arc.next_state.idx()] += 1;
                }
            }
        }
        let mut in_arcs: Vec<Vec<(usize, WordId)>> = vec![Vec::new(); n];
        for (s, arcs) in self.arcs.iter().enumerate() {
            if !keep[s] {
                continue;
            }
            for arc in arcs {
                if keep[arc.next_state.idx()] {
                    in_arcs[arc.next_state.idx()].push((s, arc.word));
                }
            }
        }
        use std::cmp::Reverse;
        use std::collections::BinaryHeap;
        let kept_total = keep.iter().filter(|&&k| k).count();
        let mut order: Vec<usize> = Vec::with_capacity(kept_total);
        let mut new_id = vec![u32::MAX; n];
        let mut ready: BinaryHeap<Reverse<(u32, &str, usize)>> = BinaryHeap::new();
        let ready_key = |new_id: &[u32], t: usize| -> (u32, &str, usize) {
            in_arcs[t]
                .iter()
                .map(|&(src, word)| (new_id[src], self.symbols.name(word), t))
                .min()
                .expect("non-start ready states have incoming arcs")
        };
        // A kept arc into the start means a cycle through it; leaving
        // the heap empty lets the length check below report it.
        if indeg[0] == 0 {
            ready.push(Reverse((0, "", 0)));
        }
        while let Some(Reverse((.., s))) = ready.pop() {
            new_id[s] = order.len() as u32;
            order.push(s);
            for arc in &self.arcs[s] {
                let t = arc.next_state.idx();
                if keep[t] {
                    indeg[t] -= 1;
                    if indeg[t] == 0 {
                        ready.push(Reverse(ready_key(&new_id, t)));
                    }
                }
            }
        }
        if order.len() != kept_total {
            return Err(Error::Cycle);
        }
        debug_assert_eq!(new_id[0], 0, "start state renumbers to 0");

        let symbols = self.symbols;
        let mut arcs: Vec<Vec<Arc>> = vec![Vec::new(); kept_total];
        for (new_s, &old_s) in order.iter().enumerate() {
            let mut out: Vec<Arc> = self.arcs[old_s]
                .iter()
                .filter(|a| keep[a.next_state.idx()])
                .map(|a| Arc {
                    next_state: StateId(new_id[a.next_state.idx()]),
                    ..*a
                })
                .collect();
            out.sort_by(|a, b| symbols.name(a.word).cmp(symbols.name(b.word)));
            arcs[new_s] = out;
        }
        let final_costs: BTreeMap<StateId, f64> = self
            .final_costs
            .iter()
            .filter(|(s, _)| keep[s.idx()])
            .map(|(s, &c)| (StateId(new_id[s.idx()]), c))
            .collect();

        let mut arc_offsets = Vec::with_capacity(kept_total + 1);
        let mut arc_src = Vec::new();
        let mut off = 0u32;
        for (s, out) in arcs.iter().enumerate() {
            arc_offsets.push(off);
            off += out.len() as u32;
            arc_src.extend(std::iter::repeat_n(StateId(s as u32), out.len()));
        }

        Ok(Trimmed {
            lattice: Lattice {
                symbols,
                arcs,
                final_costs,
                arc_offsets,
                arc_src,
            },
            trimmed_states,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::text::lattice_to_string;

    pub(crate) fn diamond(costs: [f64; 4]) -> Lattice {
        // start -a-> 1 -c-> 3, start -b-> 2 -d-> 3; final 3 at cost 0.
        let mut b = LatticeBuilder::new();
        let (wa, wb, wc, wd) = (b.intern("a"), b.intern("b"), b.intern("c"), b.intern("d"));
        for _ in 0..4 {
            b.add_state();
        }
        b.add_arc(StateId(0), wa, costs[0], 0.0, 1, StateId(1));
        b.add_arc(StateId(0), wb, costs[1], 0.0, 1, StateId(2));
        b.add_arc(StateId(1), wc, costs[2], 0.0, 1, StateId(3));
        b.add_arc(StateId(2), wd, costs[3], 0.0, 1, StateId(3));
        b.set_final(StateId(3), 0.0);
        b.finish().unwrap().lattice
    }

    #[test]
    fn single_arc_cost_is_component_sum() {
        let lat = parse_lattice("0 1 hello 0.5,1.2,10\n1 0.0\n").unwrap();
        assert_eq!(lat.num_states(), 2);
        assert_eq!(lat.num_arcs(), 1);
        let paths = lat.enumerate_paths(10).unwrap();
        assert_eq!(paths.len(), 1);
        assert!((paths[0].cost - 1.7).abs() < 1e-12);
        assert!((paths[0].component_cost(&lat) - paths[0].cost).abs() < 1e-9);
    }

    #[test]
    fn empty_document_is_a_parse_error() {
        match parse_lattice("") {
            Err(Error::Parse { .. }) => {}
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn diamond_has_two_paths() {
        let lat = diamond([1.0, 0.5, 0.25, 0.25]);
        assert_eq!(lat.num_states(), 4);
        assert_eq!(lat.num_arcs(), 4);
        let paths = lat.enumerate_paths(100).unwrap();
        assert_eq!(paths.len(), 2);
        // Sorted ascending: b,d = 0.75 then a,c = 1.25.
        assert!(paths[0].cost < paths[1].cost);
        assert_eq!(paths[0].hypothesis_words(&lat), vec!["b", "d"]);
    }

    #[test]
    fn epsilon_arcs_are_rejected() {
        let err = parse_lattice("0 1 <eps> 0.5,0.0\n1 0.0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err:?}");
    }

    #[test]
    fn duplicate_outgoing_word_is_nondeterminism() {
        let err = parse_lattice("0 1 x 0.5,0.0\n0 2 x 0.25,0.0\n1 0.0\n2 0.0\n").unwrap_err();
        assert!(matches!(err, Error::Nondeterminism { state: 0, .. }), "{err:?}");
    }

    #[test]
    fn cycles_are_rejected() {
        let err = parse_lattice("0 1 x 0.5,0.0\n1 0 y 0.5,0.0\n1 0.0\n").unwrap_err();
        assert!(matches!(err, Error::Cycle), "{err:?}");
    }

    #[test]
    fn unreachable_states_are_trimmed_with_warning() {
        let text = "0 1 x 0.5,0.0\n2 3 y 0.5,0.0\n1 0.0\n";
        let entries = parse_archive(text).unwrap();
        assert_eq!(entries.len(), 1);
        assert_eq!(entries[0].trimmed_states, 2);
        assert_eq!(entries[0].lattice.num_states(), 2);
    }

    #[test]
    fn topological_order_after_parse() {
        let lat = parse_lattice("0 2 x 0.5,0.0\n2 1 y 0.25,0.0\n1 0.0\n").unwrap();
        for id in lat.arc_ids() {
            let (src, arc) = lat.arc(id);
            assert!(src < arc.next_state);
        }
    }

    #[test]
    fn prune_large_beam_is_identity() {
        let lat = diamond([1.0, 0.5, 0.25, 0.25]);
        let pruned = lat.prune(1e9).unwrap();
        assert_eq!(lattice_to_string("t", &lat), lattice_to_string("t", &pruned));
    }

    #[test]
    fn prune_diamond_beam_two_keeps_cheap_path() {
        // Path costs 1.0 and 5.0.
        let lat = diamond([0.5, 3.0, 0.5, 2.0]);
        let pruned = lat.prune(2.0).unwrap();
        let paths = pruned.enumerate_paths(10).unwrap();
        assert_eq!(paths.len(), 1);
        assert!((paths[0].cost - 1.0).abs() < 1e-12);
        assert_eq!(paths[0].hypothesis_words(&pruned), vec!["a", "c"]);
    }

    #[test]
    fn prune_beam_zero_keeps_unique_best_only() {
        let lat = diamond([1.0, 0.5, 0.25, 0.25]);
        let pruned = lat.prune(0.0).unwrap();
        let paths = pruned.enumerate_paths(10).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].hypothesis_words(&pruned), vec!["b", "d"]);
        // Linear lattice equal to the best path.
        assert_eq!(pruned.num_states(), 3);
        assert_eq!(pruned.num_arcs(), 2);
    }

    #[test]
    fn prune_preserves_best_cost() {
        let lat = diamond([1.0, 0.5, 0.25, 0.25]);
        for beam in [0.0, 0.1, 0.5, 2.0, 100.0] {
            let pruned = lat.prune(beam).unwrap();
            let best = pruned.enumerate_paths(10).unwrap()[0].cost;
            assert!((best - 0.75).abs() < 1e-12);
        }
    }

    #[test]
    fn enumerate_linear_single_path() {
        let lat = parse_lattice("0 1 a 0.5,0.0\n1 2 b 0.5,0.0\n2 3 c 0.5,0.0\n3 0.0\n").unwrap();
        assert_eq!(lat.enumerate_paths(10).unwrap().len(), 1);
    }

    #[test]
    fn enumerate_binary_depth_ten_exceeds_limit() {
        // Depth-10 binary branching: 1024 paths.
        let mut b = LatticeBuilder::new();
        for _ in 0..11 {
            b.add_state();
        }
        for level in 0..10u32 {
            let w0 = b.intern(&format!("l{level}x"));
            let w1 = b.intern(&format!("l{level}y"));
            b.add_arc(StateId(level), w0, 0.5, 0.0, 1, StateId(level + 1));
            b.add_arc(StateId(level), w1, 0.25, 0.0, 1, StateId(level + 1));
        }
        b.set_final(StateId(10), 0.0);
        let lat = b.finish().unwrap().lattice;
        match lat.enumerate_paths(100) {
            Err(Error::TooManyPaths { limit: 100 }) => {}
            other => panic!("expected TooManyPaths, got {other:?}"),
        }
    }

    #[test]
    fn empty_path_lattice_is_allowed() {
        let lat = parse_lattice("0 0.5\n").unwrap();
        let paths = lat.enumerate_paths(10).unwrap();
        assert_eq!(paths.len(), 1);
        assert!(paths[0].arcs.is_empty());
        assert!((paths[0].cost - 0.5).abs() < 1e-12);
    }
}
