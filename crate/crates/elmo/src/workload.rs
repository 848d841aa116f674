//! Tenant, multicast-group, and churn-event generation.
//!
//! Group contents are a pure function of `(seed, group id)`, so a workload
//! can be re-streamed or generated in parallel without storing it.

use rand::distributions::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::LogNormal;
use std::collections::HashMap;
use thiserror::Error;

pub const MIN_GROUP_SIZE: u32 = 5;

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("tenant size {0} is below the minimum group size {MIN_GROUP_SIZE}")]
    TenantTooSmall(u32),
    #[error("no groups to churn")]
    NoGroups,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Sender,
    Receiver,
    Both,
}

impl Role {
    #[inline]
    pub fn can_send(self) -> bool {
        matches!(self, Role::Sender | Role::Both)
    }

    #[inline]
    pub fn can_receive(self) -> bool {
        matches!(self, Role::Receiver | Role::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Member {
    pub vm: u32,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSpec {
    pub id: u32,
    pub tenant: u32,
    /// Sorted by VM id, no duplicates; at least one sender-capable and one
    /// receiver-capable member.
    pub members: Vec<Member>,
}

impl GroupSpec {
    pub fn sender_vms(&self) -> impl Iterator<Item = u32> + '_ {
        self.members.iter().filter(|m| m.role.can_send()).map(|m| m.vm)
    }

    pub fn receiver_vms(&self) -> impl Iterator<Item = u32> + '_ {
        self.members.iter().filter(|m| m.role.can_receive()).map(|m| m.vm)
    }
}

// ---------------------------------------------------------------------------
// tenant sizes
// ---------------------------------------------------------------------------

pub const TENANT_SIZE_MIN: u32 = 10;
pub const TENANT_SIZE_MAX: u32 = 5_000;

/// Tenant sizes: shifted exponential with mean ≈ 178.8, clamped to
/// `[10, max_size]`.
pub fn sample_tenant_sizes(count: u32, max_size: u32, seed: u64) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = rand_distr::Exp::new(1.0 / 168.77).expect("valid rate");
    (0..count)
        .map(|_| {
            let v = (TENANT_SIZE_MIN as f64 + dist.sample(&mut rng)).round() as i64;
            (v.max(TENANT_SIZE_MIN as i64) as u32).min(max_size.min(TENANT_SIZE_MAX))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// group sizes
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupSizeDist {
    /// Two-component log-normal mixture shaped after the WVE deployment
    /// trace: mean near 60, ~80% of groups below 61 members, ~0.6% above
    /// 700. Scaled to the tenant by clamping into `[5, tenant_size]`.
    Wve,
    /// Uniform on `[5, tenant_size]`.
    Uniform,
}

// WVE mixture parameters, fitted offline against the three published
// aggregates (mean ~60, P(<61) ~ 0.80, P(>700) ~ 0.006) at tenant sizes
// >= 1000: a small-group body, a heavy mid component that clamps to the
// tenant size (whole-tenant groups), and a rare huge component for the
// >700-member fraction. All log-normal, clamped into [5, tenant_size].
const WVE_BODY_MU: f64 = 2.3;
const WVE_BODY_SIGMA: f64 = 0.7;
const WVE_MID_MU: f64 = 5.05;
const WVE_MID_SIGMA: f64 = 0.5;
const WVE_MID_WEIGHT: f64 = 0.225;
const WVE_HUGE_MU: f64 = 7.0;
const WVE_HUGE_SIGMA: f64 = 0.5;
const WVE_HUGE_WEIGHT: f64 = 0.010;

fn sample_group_size<R: Rng>(dist: GroupSizeDist, tenant_size: u32, rng: &mut R) -> u32 {
    debug_assert!(tenant_size >= MIN_GROUP_SIZE);
    match dist {
        GroupSizeDist::Wve => {
            let pick = rng.gen_range(0.0..1.0);
            let clamp = |v: f64| {
                (v.round().max(MIN_GROUP_SIZE as f64) as u32).min(tenant_size)
            };
            if pick < WVE_HUGE_WEIGHT {
                // huge groups only where the tenant can host them; small
                // tenants get an ordinary body draw instead
                let v = LogNormal::new(WVE_HUGE_MU, WVE_HUGE_SIGMA).unwrap().sample(rng);
                if v <= tenant_size as f64 {
                    return clamp(v);
                }
            } else if pick < WVE_HUGE_WEIGHT + WVE_MID_WEIGHT {
                return clamp(LogNormal::new(WVE_MID_MU, WVE_MID_SIGMA).unwrap().sample(rng));
            }
            clamp(LogNormal::new(WVE_BODY_MU, WVE_BODY_SIGMA).unwrap().sample(rng))
        }
        GroupSizeDist::Uniform => rng.gen_range(MIN_GROUP_SIZE..=tenant_size),
    }
}

/// Draw `count` group sizes for one tenant.
pub fn sample_group_sizes(
    dist: GroupSizeDist,
    tenant_size: u32,
    count: u32,
    seed: u64,
) -> Result<Vec<u32>, WorkloadError> {
    if tenant_size < MIN_GROUP_SIZE {
        return Err(WorkloadError::TenantTooSmall(tenant_size));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count).map(|_| sample_group_size(dist, tenant_size, &mut rng)).collect())
}

// ---------------------------------------------------------------------------
// group assignment
// ---------------------------------------------------------------------------

/// Groups per tenant, proportional to tenant size with largest-remainder
/// rounding so the counts sum to `total` exactly. Tenants below the minimum
/// group size get none.
pub fn group_counts(tenant_sizes: &[u32], total: u64) -> Vec<u32> {
    let eligible: Vec<u64> = tenant_sizes
        .iter()
        .map(|&s| if s >= MIN_GROUP_SIZE { s as u64 } else { 0 })
        .collect();
    let weight: u64 = eligible.iter().sum();
    if weight == 0 || total == 0 {
        return vec![0; tenant_sizes.len()];
    }
    let mut counts: Vec<u32> = Vec::with_capacity(tenant_sizes.len());
    let mut remainders: Vec<(u64, usize)> = Vec::with_capacity(tenant_sizes.len());
    let mut assigned: u64 = 0;
    for (i, &w) in eligible.iter().enumerate() {
        let exact = total * w;
        counts.push((exact / weight) as u32);
        assigned += exact / weight;
        remainders.push((exact % weight, i));
    }
    // hand out the leftover to the largest remainders; ties to lower index
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut leftover = total - assigned;
    for (r, i) in remainders {
        if leftover == 0 {
            break;
        }
        if r > 0 || eligible[i] > 0 {
            counts[i] += 1;
            leftover -= 1;
        }
    }
    counts
}

fn mix_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Streaming generator over a workload's groups. Each group is derived from
/// `(seed, group id)` alone.
#[derive(Debug, Clone)]
pub struct GroupGenerator {
    dist: GroupSizeDist,
    seed: u64,
    /// (tenant, first vm, tenant size, first group id) per tenant with groups
    spans: Vec<(u32, u32, u32, u64)>,
    total: u64,
}

impl GroupGenerator {
    pub fn new(
        tenant_sizes: &[u32],
        tenant_first_vm: impl Fn(u32) -> u32,
        total_groups: u64,
        dist: GroupSizeDist,
        seed: u64,
    ) -> Self {
        let counts = group_counts(tenant_sizes, total_groups);
        let mut spans = Vec::new();
        let mut next_id = 0u64;
        for (t, &c) in counts.iter().enumerate() {
            if c > 0 {
                spans.push((t as u32, tenant_first_vm(t as u32), tenant_sizes[t], next_id));
                next_id += c as u64;
            }
        }
        GroupGenerator { dist, seed, spans, total: next_id }
    }

    pub fn num_groups(&self) -> u64 {
        self.total
    }

    /// Generate one group by id.
    pub fn group(&self, id: u64) -> GroupSpec {
        debug_assert!(id < self.total);
        let span_idx = match self.spans.binary_search_by(|s| s.3.cmp(&id)) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        let (tenant, first_vm, tenant_size, _) = self.spans[span_idx];
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, id));
        let size = sample_group_size(self.dist, tenant_size, &mut rng);

        // distinct member VMs via partial Fisher-Yates over the tenant range
        let mut idx: Vec<u32> = (0..tenant_size).collect();
        let take = size as usize;
        for i in 0..take {
            let j = rng.gen_range(i..idx.len());
            idx.swap(i, j);
        }
        let mut members: Vec<Member> = idx[..take]
            .iter()
            .map(|&off| {
                let role = match rng.gen_range(0..3) {
                    0 => Role::Sender,
                    1 => Role::Receiver,
                    _ => Role::Both,
                };
                Member { vm: first_vm + off, role }
            })
            .collect();
        members.sort_unstable_by_key(|m| m.vm);
        if !members.iter().any(|m| m.role.can_send()) {
            members[0].role = Role::Both;
        }
        if !members.iter().any(|m| m.role.can_receive()) {
            members[0].role = Role::Both;
        }
        GroupSpec { id: id as u32, tenant, members }
    }

    pub fn iter(&self) -> impl Iterator<Item = GroupSpec> + '_ {
        (0..self.total).map(|id| self.group(id))
    }
}

/// Materialize a whole workload (small scales only; full-scale callers
/// stream from [`GroupGenerator`] instead).
pub fn assign_groups(
    tenant_sizes: &[u32],
    tenant_first_vm: impl Fn(u32) -> u32,
    total_groups: u64,
    dist: GroupSizeDist,
    seed: u64,
) -> Vec<GroupSpec> {
    GroupGenerator::new(tenant_sizes, tenant_first_vm, total_groups, dist, seed)
        .iter()
        .collect()
}

// ---------------------------------------------------------------------------
// churn
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Join,
    Leave,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChurnEvent {
    pub group: u32,
    pub kind: EventKind,
    pub vm: u32,
    /// Role assigned on join, or the role held by the leaving member.
    pub role: Role,
}

/// Random join/leave stream. Events per group are proportional to the
/// group's initial size; joins draw uniformly from the tenant VMs not in the
/// group, leaves uniformly from current members. A group never shrinks below
/// one member.
pub fn generate_churn(
    groups: &[GroupSpec],
    tenant_sizes: &[u32],
    tenant_first_vm: impl Fn(u32) -> u32,
    n_events: u64,
    seed: u64,
) -> Result<Vec<ChurnEvent>, WorkloadError> {
    if groups.is_empty() {
        return Err(WorkloadError::NoGroups);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // cumulative weights for size-proportional group picks
    let mut cum: Vec<u64> = Vec::with_capacity(groups.len());
    let mut acc = 0u64;
    for g in groups {
        acc += g.members.len() as u64;
        cum.push(acc);
    }

    let mut membership: HashMap<u32, HashMap<u32, Role>> = HashMap::new();
    let mut events = Vec::with_capacity(n_events as usize);
    for _ in 0..n_events {
        let pick = rng.gen_range(0..acc);
        let gi = cum.partition_point(|&c| c <= pick);
        let group = &groups[gi];
        let tenant_size = tenant_sizes[group.tenant as usize];
        let first_vm = tenant_first_vm(group.tenant);
        let members = membership
            .entry(group.id)
            .or_insert_with(|| group.members.iter().map(|m| (m.vm, m.role)).collect());

        let can_join = (members.len() as u32) < tenant_size;
        let can_leave = members.len() > 1;
        let join = match (can_join, can_leave) {
            (true, true) => rng.gen_bool(0.5),
            (true, false) => true,
            (false, true) => false,
            (false, false) => continue,
        };
        if join {
            // uniform over non-members of the tenant
            let free = tenant_size - members.len() as u32;
            let mut nth = rng.gen_range(0..free);
            let mut vm = first_vm;
            loop {
                if !members.contains_key(&vm) {
                    if nth == 0 {
                        break;
                    }
                    nth -= 1;
                }
                vm += 1;
            }
            let role = match rng.gen_range(0..3) {
                0 => Role::Sender,
                1 => Role::Receiver,
                _ => Role::Both,
            };
            members.insert(vm, role);
            events.push(ChurnEvent { group: group.id, kind: EventKind::Join, vm, role });
        } else {
            let mut keys: Vec<u32> = members.keys().copied().collect();
            keys.sort_unstable();
            let vm = keys[rng.gen_range(0..keys.len())];
            let role = members.remove(&vm).expect("member present");
            events.push(ChurnEvent { group: group.id, kind: EventKind::Leave, vm, role });
        }
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_degenerate_range() {
        let sizes = sample_group_sizes(GroupSizeDist::Uniform, 5, 1000, 42).unwrap();
        assert!(sizes.iter().all(|&s| s == 5));
    }

    #[test]
    fn uniform_mean_matches_closed_form() {
        // discrete uniform on [5, 105] has mean 55
        let sizes = sample_group_sizes(GroupSizeDist::Uniform, 105, 100_000, 7).unwrap();
        let mean = sizes.iter().map(|&s| s as f64).sum::<f64>() / sizes.len() as f64;
        assert!((mean - 55.0).abs() < 2.0, "uniform mean {mean}");
    }

    #[test]
    fn wve_matches_published_aggregates() {
        let n = 100_000u32;
        let sizes = sample_group_sizes(GroupSizeDist::Wve, 1364, n, 11).unwrap();
        let mean = sizes.iter().map(|&s| s as f64).sum::<f64>() / n as f64;
        let under61 = sizes.iter().filter(|&&s| s < 61).count() as f64 / n as f64;
        let over700 = sizes.iter().filter(|&&s| s > 700).count() as f64 / n as f64;
        assert!((54.0..=66.0).contains(&mean), "wve mean {mean}");
        assert!((0.75..=0.85).contains(&under61), "wve frac<61 {under61}");
        assert!((0.002..=0.012).contains(&over700), "wve frac>700 {over700}");
    }

    #[test]
    fn tenant_too_small_is_error() {
        assert!(sample_group_sizes(GroupSizeDist::Wve, 4, 10, 0).is_err());
    }

    #[test]
    fn counts_exactly_proportional() {
        assert_eq!(group_counts(&[100, 300], 40), vec![10, 30]);
        let counts = group_counts(&[7, 13, 2], 100);
        assert_eq!(counts.iter().map(|&c| c as u64).sum::<u64>(), 100);
        assert_eq!(counts[2], 0, "tenant below minimum group size gets none");
    }

    #[test]
    fn single_tenant_owns_all_groups() {
        let groups = assign_groups(&[50], |_| 0, 25, GroupSizeDist::Uniform, 5);
        assert_eq!(groups.len(), 25);
        assert!(groups.iter().all(|g| g.tenant == 0));
        for g in &groups {
            assert!(g.members.len() >= MIN_GROUP_SIZE as usize);
            assert!(g.members.iter().any(|m| m.role.can_send()));
            assert!(g.members.iter().any(|m| m.role.can_receive()));
            let mut vms: Vec<u32> = g.members.iter().map(|m| m.vm).collect();
            vms.dedup();
            assert_eq!(vms.len(), g.members.len(), "duplicate members");
            assert!(vms.iter().all(|&v| v < 50));
        }
    }

    #[test]
    fn generation_is_deterministic_and_order_free() {
        let sizes = vec![40, 200, 17];
        let gen = GroupGenerator::new(&sizes, |t| (0..t).map(|i| sizes[i as usize]).sum(), 100, GroupSizeDist::Wve, 99);
        let all: Vec<GroupSpec> = gen.iter().collect();
        // random access equals streamed output
        assert_eq!(gen.group(57), all[57]);
        assert_eq!(gen.group(0), all[0]);
        let gen2 = GroupGenerator::new(&sizes, |t| (0..t).map(|i| sizes[i as usize]).sum(), 100, GroupSizeDist::Wve, 99);
        assert_eq!(gen2.group(42), all[42]);
    }

    #[test]
    fn churn_split_tracks_group_sizes() {
        let groups = vec![
            GroupSpec {
                id: 0,
                tenant: 0,
                members: (0..10).map(|vm| Member { vm, role: Role::Both }).collect(),
            },
            GroupSpec {
                id: 1,
                tenant: 1,
                members: (100..190).map(|vm| Member { vm, role: Role::Both }).collect(),
            },
        ];
        let sizes = [2000, 2000];
        let ev = generate_churn(&groups, &sizes, |t| t * 100, 10_000, 3).unwrap();
        let g0 = ev.iter().filter(|e| e.group == 0).count() as f64;
        assert!((g0 / 10_000.0 - 0.10).abs() < 0.02, "size split {g0}");
    }

    #[test]
    fn churn_replay_is_always_valid() {
        let groups = assign_groups(&[30, 60], |t| t * 60, 20, GroupSizeDist::Uniform, 8);
        let sizes = [30, 60];
        let ev = generate_churn(&groups, &sizes, |t| t * 60, 5_000, 21).unwrap();
        let mut membership: Vec<HashMap<u32, Role>> = groups
            .iter()
            .map(|g| g.members.iter().map(|m| (m.vm, m.role)).collect())
            .collect();
        for e in &ev {
            let m = &mut membership[e.group as usize];
            match e.kind {
                EventKind::Join => {
                    assert!(m.insert(e.vm, e.role).is_none(), "join of existing member");
                    let tenant = groups[e.group as usize].tenant;
                    let first = tenant * 60;
                    assert!(e.vm >= first && e.vm < first + sizes[tenant as usize]);
                }
                EventKind::Leave => {
                    assert_eq!(m.remove(&e.vm), Some(e.role), "invalid leave");
                    assert!(!m.is_empty());
                }
            }
        }
    }
}
