//! Tenant VM placement onto hosts.
//!
//! Hosts take at most [`HOST_VM_CAPACITY`] VMs and never two VMs of the same
//! tenant. Placement walks each tenant in turn: draw a pod uniformly at
//! random and fill it leaf by leaf (each drawn uniformly, packing up to `P`
//! of the tenant's VMs onto distinct free hosts); when the pod has no leaf
//! left that can take more, re-draw another pod. Pods and leaves are tried
//! without replacement per tenant, so exhausting them all is the
//! infeasibility condition.

use crate::topology::Topology;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;
use thiserror::Error;

/// Maximum VMs a single host accommodates.
pub const HOST_VM_CAPACITY: u8 = 20;

#[derive(Debug, Error)]
pub enum PlacementError {
    #[error("tenant {tenant} has {unplaced} VMs left but no leaf can take more")]
    Infeasible { tenant: u32, unplaced: u32 },
    #[error("total VM demand {demand} exceeds host capacity {capacity}")]
    Overcommitted { demand: u64, capacity: u64 },
    #[error("max VMs of a tenant per leaf must be in 1..={max}, got {got}")]
    BadSpread { got: u16, max: u16 },
}

#[derive(Debug, Clone, Copy)]
pub struct PlacementConfig {
    /// `P`: at most this many VMs of one tenant under a single leaf.
    pub max_tenant_vms_per_leaf: u16,
    pub seed: u64,
}

/// Immutable VM-to-host assignment. VM ids are global and tenant-major:
/// tenant `t` owns the contiguous id range returned by [`Placement::tenant_vms`].
#[derive(Debug, Clone)]
pub struct Placement {
    vm_host: Vec<u32>,
    tenant_start: Vec<u32>,
}

impl Placement {
    /// Build from an explicit VM-to-host map. `tenant_start[t]..tenant_start[t+1]`
    /// is tenant `t`'s VM id range; the last entry is the total VM count.
    pub fn from_assignment(vm_host: Vec<u32>, tenant_start: Vec<u32>) -> Self {
        assert!(!tenant_start.is_empty());
        assert_eq!(*tenant_start.last().unwrap() as usize, vm_host.len());
        Placement { vm_host, tenant_start }
    }

    #[inline]
    pub fn num_vms(&self) -> u32 {
        self.vm_host.len() as u32
    }

    #[inline]
    pub fn num_tenants(&self) -> u32 {
        (self.tenant_start.len() - 1) as u32
    }

    #[inline]
    pub fn host_of_vm(&self, vm: u32) -> u32 {
        self.vm_host[vm as usize]
    }

    #[inline]
    pub fn tenant_vms(&self, tenant: u32) -> std::ops::Range<u32> {
        self.tenant_start[tenant as usize]..self.tenant_start[tenant as usize + 1]
    }

    #[inline]
    pub fn tenant_size(&self, tenant: u32) -> u32 {
        let r = self.tenant_vms(tenant);
        r.end - r.start
    }
}

/// Place `tenant_sizes[t]` VMs for each tenant `t`.
pub fn place_tenants(
    topology: &Topology,
    tenant_sizes: &[u32],
    cfg: PlacementConfig,
) -> Result<Placement, PlacementError> {
    let p = cfg.max_tenant_vms_per_leaf;
    if p == 0 || p > topology.spec().hosts_per_leaf {
        return Err(PlacementError::BadSpread { got: p, max: topology.spec().hosts_per_leaf });
    }
    let demand: u64 = tenant_sizes.iter().map(|&s| s as u64).sum();
    let capacity = topology.num_hosts() as u64 * HOST_VM_CAPACITY as u64;
    if demand > capacity {
        return Err(PlacementError::Overcommitted { demand, capacity });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let hosts_per_leaf = topology.spec().hosts_per_leaf as usize;
    let num_leaves = topology.num_leaves() as usize;
    let pods = topology.num_pods() as usize;
    let leaves_per_pod = topology.spec().leaves_per_pod as usize;

    let mut host_load = vec![0u8; topology.num_hosts() as usize];
    // per leaf, host ports that still have free capacity
    let mut free_ports: Vec<Vec<u8>> = (0..num_leaves)
        .map(|_| (0..hosts_per_leaf as u8).collect())
        .collect();

    let mut vm_host = Vec::with_capacity(demand as usize);
    let mut tenant_start = Vec::with_capacity(tenant_sizes.len() + 1);
    tenant_start.push(0u32);

    for (tenant, &size) in tenant_sizes.iter().enumerate() {
        let mut remaining = size;
        let mut tried_pods: HashSet<u16> = HashSet::new();
        let mut used_leaves: HashSet<u16> = HashSet::new();
        while remaining > 0 {
            if tried_pods.len() == pods {
                return Err(PlacementError::Infeasible {
                    tenant: tenant as u32,
                    unplaced: remaining,
                });
            }
            let pod = loop {
                let candidate = rng.gen_range(0..pods) as u16;
                if !tried_pods.contains(&candidate) {
                    break candidate;
                }
            };
            let base = pod as usize * leaves_per_pod;
            // fill this pod leaf by leaf before moving on
            while remaining > 0 {
                let candidates: Vec<u16> = (0..leaves_per_pod)
                    .map(|i| (base + i) as u16)
                    .filter(|l| {
                        !used_leaves.contains(l) && !free_ports[*l as usize].is_empty()
                    })
                    .collect();
                let Some(&leaf) = candidates.as_slice().choose(&mut rng) else {
                    break;
                };
                used_leaves.insert(leaf);
                let free = &mut free_ports[leaf as usize];
                let take = remaining.min(p as u32).min(free.len() as u32) as usize;
                // partial shuffle: draw `take` distinct hosts
                for i in 0..take {
                    let j = rng.gen_range(i..free.len());
                    free.swap(i, j);
                }
                let mut chosen: Vec<u8> = free[..take].to_vec();
                chosen.sort_unstable();
                for port in chosen {
                    let host = topology.host_of(leaf, port);
                    host_load[host as usize] += 1;
                    if host_load[host as usize] >= HOST_VM_CAPACITY {
                        free_ports[leaf as usize].retain(|&q| q != port);
                    }
                    vm_host.push(host);
                }
                remaining -= take as u32;
            }
            tried_pods.insert(pod);
        }
        tenant_start.push(vm_host.len() as u32);
    }

    Ok(Placement { vm_host, tenant_start })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::TopologySpec;
    use proptest::prelude::*;
    use std::collections::{HashMap, HashSet};

    fn topo(spec: TopologySpec) -> Topology {
        Topology::build(spec).unwrap()
    }

    #[test]
    fn spread_tenant_lands_on_distinct_leaves() {
        let t = topo(TopologySpec {
            pods: 4,
            spines_per_pod: 2,
            leaves_per_pod: 3,
            hosts_per_leaf: 8,
            cores: 4,
        });
        let cfg = PlacementConfig { max_tenant_vms_per_leaf: 1, seed: 7 };
        let p = place_tenants(&t, &[10], cfg).unwrap();
        let mut leaves: Vec<u16> = (0..10).map(|vm| t.leaf_of_host(p.host_of_vm(vm))).collect();
        leaves.sort_unstable();
        leaves.dedup();
        assert_eq!(leaves.len(), 10, "P=1 must use 10 distinct leaves");
    }

    #[test]
    fn packed_tenant_fits_one_leaf() {
        let t = topo(TopologySpec::example());
        let cfg = PlacementConfig { max_tenant_vms_per_leaf: 8, seed: 3 };
        // 8 VMs with P=8 fit under a single leaf on 8 distinct hosts
        let p = place_tenants(&t, &[8], cfg).unwrap();
        let leaves: HashSet<u16> = (0..8).map(|vm| t.leaf_of_host(p.host_of_vm(vm))).collect();
        assert_eq!(leaves.len(), 1);
        let hosts: HashSet<u32> = (0..8).map(|vm| p.host_of_vm(vm)).collect();
        assert_eq!(hosts.len(), 8);
    }

    #[test]
    fn capacity_exhaustion_is_an_error() {
        let spec = TopologySpec {
            pods: 1,
            spines_per_pod: 1,
            leaves_per_pod: 1,
            hosts_per_leaf: 2,
            cores: 1,
        };
        let t = topo(spec);
        let cfg = PlacementConfig { max_tenant_vms_per_leaf: 2, seed: 1 };
        // two hosts, tenant-exclusive: a 3-VM tenant cannot be placed
        assert!(place_tenants(&t, &[3], cfg).is_err());
    }

    #[test]
    fn deterministic_under_fixed_seed() {
        let t = topo(TopologySpec::example());
        let cfg = PlacementConfig { max_tenant_vms_per_leaf: 4, seed: 99 };
        let sizes = [13, 7, 22];
        let a = place_tenants(&t, &sizes, cfg).unwrap();
        let b = place_tenants(&t, &sizes, cfg).unwrap();
        assert_eq!(a.vm_host, b.vm_host);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn placement_invariants(
            seed in any::<u64>(),
            p in 1u16..=4,
            sizes in proptest::collection::vec(1u32..30, 1..6),
        ) {
            let t = topo(TopologySpec { pods: 2, spines_per_pod: 2, leaves_per_pod: 3, hosts_per_leaf: 4, cores: 2 });
            let cfg = PlacementConfig { max_tenant_vms_per_leaf: p, seed };
            let Ok(placed) = place_tenants(&t, &sizes, cfg) else { return Ok(()); };
            let mut host_load: HashMap<u32, u32> = HashMap::new();
            for tenant in 0..placed.num_tenants() {
                let mut per_leaf: HashMap<u16, u32> = HashMap::new();
                let mut hosts = HashSet::new();
                for vm in placed.tenant_vms(tenant) {
                    let h = placed.host_of_vm(vm);
                    prop_assert!(hosts.insert(h), "tenant shares a host");
                    *per_leaf.entry(t.leaf_of_host(h)).or_default() += 1;
                    *host_load.entry(h).or_default() += 1;
                }
                for (_, n) in per_leaf {
                    prop_assert!(n <= p as u32, "per-leaf tenant cap violated");
                }
            }
            for (_, n) in host_load {
                prop_assert!(n <= HOST_VM_CAPACITY as u32);
            }
        }
    }
}
