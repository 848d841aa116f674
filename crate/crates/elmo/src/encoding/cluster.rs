//! Per-layer clustering of input bitmaps into shared p-rules, with s-rule
//! and default-rule fallback.

use super::{DefaultRule, EncodingError, LayerEncoding, SharedRule};
use crate::bitmap::PortBitmap;

/// Greedy approximate MIN-K-UNION: pick `k` of the given bitmaps whose union
/// has minimum cardinality.
///
/// Every bitmap is tried as the seed; from a seed, the bitmap minimizing the
/// popcount increase of the running union is added until `k` are chosen
/// (ties: lowest switch id). The best run wins, compared by union popcount
/// and then by the chosen id set, which keeps results deterministic and
/// guarantees the optimum whenever `k` identical bitmaps exist.
///
/// Returns indices into `entries`.
pub fn approx_min_k_union(
    k: usize,
    entries: &[(u16, PortBitmap)],
) -> Result<Vec<usize>, EncodingError> {
    if k == 0 {
        return Err(EncodingError::KZero);
    }
    if k > entries.len() {
        return Err(EncodingError::KTooLarge { k, n: entries.len() });
    }
    if k == 1 {
        let best = (0..entries.len())
            .min_by_key(|&i| (entries[i].1.count_ones(), entries[i].0))
            .expect("nonempty");
        return Ok(vec![best]);
    }

    let mut best: Option<(u32, Vec<u16>, Vec<usize>)> = None;
    let mut seeds: Vec<usize> = (0..entries.len()).collect();
    seeds.sort_unstable_by_key(|&i| (entries[i].1.count_ones(), entries[i].0));
    let mut taken = vec![false; entries.len()];
    for &seed in &seeds {
        taken.fill(false);
        taken[seed] = true;
        let mut chosen = vec![seed];
        let mut union = entries[seed].1;
        for _ in 1..k {
            let next = (0..entries.len())
                .filter(|&i| !taken[i])
                .min_by_key(|&i| (union.union_increase(&entries[i].1), entries[i].0))
                .expect("k <= entries.len()");
            taken[next] = true;
            union = union.union(&entries[next].1);
            chosen.push(next);
        }
        let mut ids: Vec<u16> = chosen.iter().map(|&i| entries[i].0).collect();
        ids.sort_unstable();
        let candidate = (union.count_ones(), ids, chosen);
        match &best {
            Some(b) if (b.0, &b.1) <= (candidate.0, &candidate.1) => {}
            _ => best = Some(candidate),
        }
    }
    let mut chosen = best.expect("at least one seed").2;
    chosen.sort_unstable();
    Ok(chosen)
}

/// Chained p-rules for one layer plus the switches that did not fit.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClusterOutcome {
    pub rules: Vec<SharedRule>,
    pub unassigned: Vec<(u16, PortBitmap)>,
}

/// The p-rule half of the clustering pass.
///
/// While switches remain unassigned and fewer than `h_max` rules exist, a
/// candidate set of `k` bitmaps is taken via [`approx_min_k_union`] and
/// accepted if every member's Hamming distance to the union bitmap is at
/// most `r`; otherwise `k` is decremented and never re-raised. `k` begins
/// at the smallest sharing degree that could still fit the layer,
/// `ceil(unassigned / rules-left)`, capped by `k_cap`, so sharing (and its
/// spurious traffic) is introduced only when the rule budget demands it.
pub fn cluster_prules(
    entries: &[(u16, PortBitmap)],
    r: u32,
    h_max: u16,
    k_cap: u8,
) -> ClusterOutcome {
    let mut unassigned: Vec<(u16, PortBitmap)> = entries.to_vec();
    unassigned.sort_unstable_by_key(|e| e.0);
    let mut rules = Vec::new();
    let mut k_ceiling = (k_cap as usize).max(1);
    while !unassigned.is_empty() && (rules.len() as u16) < h_max {
        let rules_left = h_max as usize - rules.len();
        let need = unassigned.len().div_ceil(rules_left);
        // when even maximal sharing cannot fit the layer, sharing only buys
        // spurious traffic; emit exact singleton rules and spill the rest
        let need = if need > k_cap as usize { 1 } else { need };
        let k = need.min(k_ceiling).min(unassigned.len()).max(1);
        let chosen = approx_min_k_union(k, &unassigned).expect("k bounded by unassigned");
        let mut union = PortBitmap::empty(unassigned[chosen[0]].1.width());
        for &i in &chosen {
            union = union.union(&unassigned[i].1);
        }
        let max_dist: u32 =
            chosen.iter().map(|&i| union.hamming(&unassigned[i].1)).max().unwrap_or(0);
        if max_dist <= r {
            let switches: Vec<u16> = chosen.iter().map(|&i| unassigned[i].0).collect();
            for &i in chosen.iter().rev() {
                unassigned.remove(i);
            }
            rules.push(SharedRule { switches, bitmap: union });
        } else {
            // k == 1 always passes (distance 0), so this terminates
            k_ceiling = k - 1;
        }
    }
    ClusterOutcome { rules, unassigned }
}

/// Full clustering pass for one downstream layer.
///
/// `reserve_srule` is the per-switch reserve-or-fail contract: it must
/// atomically claim one s-rule slot (with the given bitmap) for the logical
/// switch and report whether capacity allowed it. Switches it rejects fall
/// to the default p-rule, whose bitmap is the OR of its members.
pub fn cluster_layer(
    entries: &[(u16, PortBitmap)],
    r: u32,
    h_max: u16,
    k_cap: u8,
    reserve_srule: &mut dyn FnMut(u16, &PortBitmap) -> bool,
) -> LayerEncoding {
    let ClusterOutcome { rules, unassigned } = cluster_prules(entries, r, h_max, k_cap);
    admit_spills(rules, unassigned, reserve_srule)
}

/// s-rule/default admission for a layer's leftovers, in ascending switch-id
/// order (callers replaying a workload therefore admit in workload order).
pub fn admit_spills(
    p_rules: Vec<SharedRule>,
    unassigned: Vec<(u16, PortBitmap)>,
    reserve_srule: &mut dyn FnMut(u16, &PortBitmap) -> bool,
) -> LayerEncoding {
    let mut s_rule_installs = Vec::new();
    let mut default_members = Vec::new();
    let mut default_bitmap: Option<PortBitmap> = None;
    for (switch, bm) in unassigned {
        if reserve_srule(switch, &bm) {
            s_rule_installs.push((switch, bm));
        } else {
            default_members.push(switch);
            default_bitmap = Some(match default_bitmap {
                Some(d) => d.union(&bm),
                None => bm,
            });
        }
    }
    let default_rule = default_bitmap
        .map(|bitmap| DefaultRule { members: default_members, bitmap });
    LayerEncoding { p_rules, s_rule_installs, default_rule }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bm(s: &str) -> PortBitmap {
        PortBitmap::parse(s).unwrap()
    }

    fn fig3_leaves() -> Vec<(u16, PortBitmap)> {
        vec![
            (0, bm("00010111")),
            (5, bm("11010000")),
            (6, bm("00110111")),
            (7, bm("11011000")),
        ]
    }

    #[test]
    fn k1_is_min_popcount() {
        let e = fig3_leaves();
        assert_eq!(approx_min_k_union(1, &e).unwrap(), vec![1]); // L5, 3 bits
    }

    #[test]
    fn identical_bitmaps_are_optimal() {
        // the greedy must find the three identical bitmaps even though a
        // lower-popcount seed exists
        let e = vec![
            (0, bm("0001")),
            (1, bm("1110")),
            (2, bm("1110")),
            (3, bm("1110")),
        ];
        let chosen = approx_min_k_union(3, &e).unwrap();
        assert_eq!(chosen, vec![1, 2, 3]);
    }

    #[test]
    fn k_larger_than_input_is_error() {
        let e = fig3_leaves();
        assert!(approx_min_k_union(5, &e).is_err());
        assert!(approx_min_k_union(0, &e).is_err());
    }

    #[test]
    fn shared_rules_match_worked_example() {
        // R = 2, two rules for four leaves: {L5,L7} and {L0,L6}
        let out = cluster_prules(&fig3_leaves(), 2, 2, 2);
        assert!(out.unassigned.is_empty());
        let sets: Vec<Vec<u16>> = out.rules.iter().map(|r| r.switches.clone()).collect();
        assert!(sets.contains(&vec![0, 6]));
        assert!(sets.contains(&vec![5, 7]));
    }

    #[test]
    fn zero_redundancy_spills_to_srules() {
        // R = 0 admits only identical bitmaps; with two rule slots the two
        // smallest-popcount leaves win and L6/L7 take s-rules
        let mut reserved = Vec::new();
        let enc = cluster_layer(&fig3_leaves(), 0, 2, 2, &mut |s, _| {
            reserved.push(s);
            true
        });
        let solo: Vec<Vec<u16>> = enc.p_rules.iter().map(|r| r.switches.clone()).collect();
        assert_eq!(solo, vec![vec![5], vec![0]]);
        assert_eq!(reserved, vec![6, 7]);
        assert!(enc.default_rule.is_none());
    }

    #[test]
    fn no_srule_capacity_falls_to_default() {
        let enc = cluster_layer(&fig3_leaves(), 0, 2, 2, &mut |_, _| false);
        let d = enc.default_rule.expect("default present");
        assert_eq!(d.members, vec![6, 7]);
        assert_eq!(d.bitmap, bm("00110111").union(&bm("11011000")));
        assert!(enc.s_rule_installs.is_empty());
    }

    #[test]
    fn identical_inputs_share_one_rule() {
        let e: Vec<(u16, PortBitmap)> = (0..4).map(|i| (i, bm("0101"))).collect();
        let enc = cluster_layer(&e, 0, 10, 3, &mut |_, _| true);
        // k adapts to the budget: no sharing is needed with 10 slots, but
        // identical bitmaps always satisfy any r, so each gets a rule
        assert!(enc.fully_covered());
        let covered: usize = enc.p_rules.iter().map(|r| r.switches.len()).sum();
        assert_eq!(covered, 4);
        for r in &enc.p_rules {
            assert_eq!(r.bitmap, bm("0101"));
        }
    }

    #[test]
    fn sharing_kicks_in_when_budget_demands() {
        let e: Vec<(u16, PortBitmap)> = (0..4).map(|i| (i, bm("0101"))).collect();
        let enc = cluster_layer(&e, 0, 2, 3, &mut |_, _| false);
        assert!(enc.fully_covered());
        assert_eq!(enc.p_rules.len(), 2);
        assert_eq!(enc.p_rules[0].switches.len(), 2);
    }

    #[test]
    fn default_absorbs_everything_when_h_is_zero() {
        let enc = cluster_layer(&fig3_leaves(), 2, 0, 2, &mut |_, _| false);
        assert!(enc.p_rules.is_empty());
        assert_eq!(enc.default_rule.unwrap().members.len(), 4);
    }
}
