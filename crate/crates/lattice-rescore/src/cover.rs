//! Lattice-to-list conversion via a constrained path cover.
//!
//! Batched LM evaluation needs a flat list of hypotheses; a path cover
//! is a set of complete paths that together include every arc. Rather
//! than a true minimum cover, each retained path is constrained to be
//! the best path through at least one of its arcs, so the histories fed
//! to the scorer are the ones that matter for rescoring quality.
//!
//! Generation: for every arc, assemble the best complete path through it
//! from max-semiring forward/backward links, skipping paths already
//! generated. Sort ascending by cost. Then sweep from the worst path to
//! the best, dropping any path whose arcs all remain covered by the
//! paths still kept.

use std::collections::{BTreeSet, HashMap};

use crate::lattice::{ArcId, Lattice, Path, StateId};
use crate::viterbi::{best_path_through, forward_backward, Semiring};

/// One hypothesis of a cover: the path, plus the arcs for which this
/// path is the recorded best path (its generation triggers).
#[derive(Debug, Clone)]
pub struct CoverPath {
    pub path: Path,
    pub covered_arcs: BTreeSet<ArcId>,
}

/// A constrained path cover, sorted ascending by path cost.
#[derive(Debug, Clone)]
pub struct PathCover {
    pub paths: Vec<CoverPath>,
    /// For every arc, the retained paths containing it as
    /// (path index, position within the path) pairs.
    pub arc_to_paths: Vec<Vec<(u32, u32)>>,
    /// Extra best paths stopping at final states no cover path ends at,
    /// so every final stop gets a scored end-of-sentence hypothesis.
    /// Only relevant for finals with outgoing arcs; sinks are always
    /// covered by the paths themselves.
    pub stop_paths: Vec<(StateId, Path)>,
}

impl PathCover {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty() && self.stop_paths.is_empty()
    }

    /// Number of hypotheses a scorer will see: cover paths plus stop
    /// paths.
    pub fn num_hypotheses(&self) -> usize {
        self.paths.len() + self.stop_paths.len()
    }
}

/// Lower-bound size of a path cover from state degrees:
/// `sum_s max(deg_out(s) - deg_in(s), 0)`. Every surplus outgoing arc at
/// a state forces an additional path through it. The start state has no
/// incoming arcs in a canonical lattice, so its whole out-degree counts.
pub fn min_cover_size(lat: &Lattice) -> usize {
    let mut deg_in = vec![0usize; lat.num_states()];
    for id in lat.arc_ids() {
        deg_in[lat.arc(id).1.next_state.idx()] += 1;
    }
    lat.states()
        .map(|s| lat.out(s).len().saturating_sub(deg_in[s.idx()]))
        .sum()
}

/// Build the constrained path cover of a lattice.
pub fn constrained_path_cover(lat: &Lattice) -> PathCover {
    let fb = forward_backward(lat, Semiring::Max);

    // Generate the best path through every arc, once per distinct path.
    let mut generated: Vec<Path> = Vec::new();
    let mut by_arcs: HashMap<Vec<ArcId>, usize> = HashMap::new();
    let mut best_for: Vec<BTreeSet<ArcId>> = Vec::new();
    for id in lat.arc_ids() {
        let path = best_path_through(lat, &fb, id);
        let idx = *by_arcs.entry(path.arcs.clone()).or_insert_with(|| {
            generated.push(path);
            best_for.push(BTreeSet::new());
            generated.len() - 1
        });
        best_for[idx].insert(id);
    }

    // Sort by cost with the global tie-break, keeping trigger sets attached.
    let mut order: Vec<usize> = (0..generated.len()).collect();
    order.sort_by(|&a, &b| lat.cmp_paths(&generated[a], &generated[b]));
    let paths: Vec<CoverPath> = order
        .into_iter()
        .map(|i| CoverPath {
            path: generated[i].clone(),
            covered_arcs: std::mem::take(&mut best_for[i]),
        })
        .collect();

    // Worst-first redundancy sweep: drop a path when every arc it uses
    // is still covered by the remaining paths.
    let mut coverage = vec![0usize; lat.num_arcs()];
    for cp in &paths {
        for &id in &cp.path.arcs {
            coverage[id.idx()] += 1;
        }
    }
    let mut keep = vec![true; paths.len()];
    for i in (0..paths.len()).rev() {
        if paths[i].path.arcs.iter().all(|&id| coverage[id.idx()] >= 2) {
            keep[i] = false;
            for &id in &paths[i].path.arcs {
                coverage[id.idx()] -= 1;
            }
        }
    }
    let paths: Vec<CoverPath> = paths
        .into_iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(p))
        .collect();

    let mut arc_to_paths: Vec<Vec<(u32, u32)>> = vec![Vec::new(); lat.num_arcs()];
    for (pi, cp) in paths.iter().enumerate() {
        for (pos, &id) in cp.path.arcs.iter().enumerate() {
            arc_to_paths[id.idx()].push((pi as u32, pos as u32));
        }
    }

    // Finals where no retained path stops need their own hypothesis so
    // the end-of-sentence cost can be estimated there.
    let covered_stops: std::collections::HashSet<StateId> =
        paths.iter().map(|cp| cp.path.end_state(lat)).collect();
    let mut stop_paths = Vec::new();
    for (f, fc) in lat.finals() {
        if covered_stops.contains(&f) {
            continue;
        }
        let mut arcs = Vec::new();
        let mut state = f;
        while let Some(p) = fb.best_pred[state.idx()] {
            arcs.push(p);
            state = lat.arc(p).0;
        }
        arcs.reverse();
        let cost: f64 = arcs.iter().map(|&id| lat.arc(id).1.cost()).sum::<f64>() + fc;
        stop_paths.push((f, Path { arcs, cost }));
    }

    PathCover {
        paths,
        arc_to_paths,
        stop_paths,
    }
}

/// A cover path flattened to its scoreable word sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hypothesis {
    /// Index of the path within the cover.
    pub path_id: u32,
    /// Words with structural tokens removed.
    pub words: Vec<String>,
}

/// Word sequences for LM evaluation: one per cover path in cover order,
/// then one per stop path. Ids index into that combined order.
pub fn cover_to_hypotheses(lat: &Lattice, cover: &PathCover) -> Vec<Hypothesis> {
    cover
        .paths
        .iter()
        .map(|cp| &cp.path)
        .chain(cover.stop_paths.iter().map(|(_, p)| p))
        .enumerate()
        .map(|(i, path)| Hypothesis {
            path_id: i as u32,
            words: path.hypothesis_words(lat),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{parse_lattice, LatticeBuilder, StateId};

    fn linear_abc() -> Lattice {
        parse_lattice("0 1 a 0.5,0.0\n1 2 b 0.25,0.0\n2 3 c 0.125,0.0\n3 0.0\n").unwrap()
    }

    fn diamond() -> Lattice {
        parse_lattice("0 1 a 0.25,0.0\n0 2 b 0.5,0.0\n1 3 c 0.25,0.0\n2 3 d 0.5,0.0\n3 0.0\n")
            .unwrap()
    }

    #[test]
    fn linear_chain_bound_is_one() {
        assert_eq!(min_cover_size(&linear_abc()), 1);
    }

    #[test]
    fn diamond_bound_is_two() {
        assert_eq!(min_cover_size(&diamond()), 2);
    }

    #[test]
    fn prefix_tree_bound_is_leaf_count() {
        // Three leaves.
        let mut b = LatticeBuilder::new();
        let words: Vec<_> = ["a", "b", "c", "d", "e"].iter().map(|w| b.intern(w)).collect();
        for _ in 0..6 {
            b.add_state();
        }
        b.add_arc(StateId(0), words[0], 0.5, 0.0, 1, StateId(1));
        b.add_arc(StateId(0), words[1], 0.5, 0.0, 1, StateId(2));
        b.add_arc(StateId(1), words[2], 0.5, 0.0, 1, StateId(3));
        b.add_arc(StateId(1), words[3], 0.5, 0.0, 1, StateId(4));
        b.add_arc(StateId(2), words[4], 0.5, 0.0, 1, StateId(5));
        for s in [3, 4, 5] {
            b.set_final(StateId(s), 0.0);
        }
        let lat = b.finish().unwrap().lattice;
        assert_eq!(min_cover_size(&lat), 3);
    }

    #[test]
    fn linear_chain_cover_is_the_lattice_itself() {
        let lat = linear_abc();
        let cover = constrained_path_cover(&lat);
        assert_eq!(cover.len(), 1);
        assert_eq!(cover.paths[0].path.arcs.len(), 3);
        assert_eq!(cover.paths[0].covered_arcs.len(), 3);
    }

    #[test]
    fn diamond_cover_has_two_paths_sorted() {
        let lat = diamond();
        let cover = constrained_path_cover(&lat);
        assert_eq!(cover.len(), 2);
        assert!(cover.paths[0].path.cost <= cover.paths[1].path.cost);
        // Every arc covered.
        assert!(cover.arc_to_paths.iter().all(|v| !v.is_empty()));
        // Every retained path is the best path for at least one arc.
        assert!(cover.paths.iter().all(|p| !p.covered_arcs.is_empty()));
    }

    #[test]
    fn cover_size_respects_degree_bound_on_fixtures() {
        for lat in [linear_abc(), diamond()] {
            let cover = constrained_path_cover(&lat);
            assert_eq!(cover.len(), min_cover_size(&lat));
        }
    }

    #[test]
    fn hypotheses_for_linear_chain() {
        let lat = linear_abc();
        let cover = constrained_path_cover(&lat);
        let hyps = cover_to_hypotheses(&lat, &cover);
        assert_eq!(hyps.len(), 1);
        assert_eq!(hyps[0].words, vec!["a", "b", "c"]);
        assert_eq!(hyps[0].path_id, 0);
    }

    #[test]
    fn hypotheses_for_diamond_in_cover_order() {
        let lat = diamond();
        let cover = constrained_path_cover(&lat);
        let hyps = cover_to_hypotheses(&lat, &cover);
        assert_eq!(hyps.len(), 2);
        assert_eq!(hyps[0].words, vec!["a", "c"]);
        assert_eq!(hyps[1].words, vec!["b", "d"]);
    }

    #[test]
    fn structural_tokens_are_excluded_from_hypotheses() {
        let lat =
            parse_lattice("0 1 <s> 0.0,0.0,0\n1 2 hello 0.5,0.0\n2 3 </s> 0.0,0.0,0\n3 0.0\n")
                .unwrap();
        let cover = constrained_path_cover(&lat);
        let hyps = cover_to_hypotheses(&lat, &cover);
        assert_eq!(hyps[0].words, vec!["hello"]);
        // Raw arc count differs from hypothesis length.
        assert_eq!(cover.paths[0].path.arcs.len(), 3);
    }
}
