//! Random key predistribution and link security.
//!
//! Each node is loaded with a random ring of `ring_size` keys drawn without
//! replacement from a pool of `pool_size` keys. Adjacent nodes that share at
//! least one pool key form a SHARED secure link; adjacent nodes that share
//! none are given a freshly minted PATH key, modelling path-key
//! establishment through already-secured links. The closed-form
//! probabilities for ring overlap and for a third party holding a given key
//! are provided alongside, so measured rates can be checked against them.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use rand::seq::index::sample;

use crate::sim::{KeyId, NodeId, RngStream, Topology};

#[derive(Debug, thiserror::Error)]
pub enum KeyDistError {
    #[error("invalid key parameters: {0}")]
    InvalidParams(String),
}

/// The key pool; only its size matters here. Pool keys are identified by
/// `0..size`, path keys by ids starting at `size`.
#[derive(Debug, Clone, Copy)]
pub struct KeyPool {
    pub size: u64,
}

impl KeyPool {
    pub fn new(size: u64) -> Self {
        KeyPool { size }
    }

    pub fn is_pool_key(&self, k: KeyId) -> bool {
        k.0 < self.size
    }
}

/// The keys a single node holds: its predistributed ring plus any path keys
/// minted for it afterwards.
#[derive(Debug, Clone)]
pub struct KeyRing {
    pub owner: NodeId,
    pub ring: BTreeSet<KeyId>,
    pub path_keys: BTreeSet<KeyId>,
}

impl KeyRing {
    pub fn holds(&self, k: KeyId) -> bool {
        self.ring.contains(&k) || self.path_keys.contains(&k)
    }
}

/// Can `ring`'s owner read a message encrypted under `key`?
pub fn can_decrypt(ring: &KeyRing, key: KeyId) -> bool {
    ring.holds(key)
}

/// How a secured pair of nodes obtained its key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkKey {
    /// Both rings contained the key already.
    Shared(KeyId),
    /// Minted after predistribution because the rings were disjoint.
    Path(KeyId),
}

impl LinkKey {
    pub fn key_id(self) -> KeyId {
        match self {
            LinkKey::Shared(k) | LinkKey::Path(k) => k,
        }
    }
}

/// Pairwise link security, keyed by unordered node pair.
#[derive(Debug, Clone, Default)]
pub struct SecurityMap {
    links: BTreeMap<(NodeId, NodeId), LinkKey>,
}

fn pair(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl SecurityMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn link(&self, a: NodeId, b: NodeId) -> Option<LinkKey> {
        self.links.get(&pair(a, b)).copied()
    }

    pub fn insert(&mut self, a: NodeId, b: NodeId, key: LinkKey) {
        self.links.insert(pair(a, b), key);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(NodeId, NodeId), &LinkKey)> {
        self.links.iter()
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn shared_count(&self) -> usize {
        self.links.values().filter(|l| matches!(l, LinkKey::Shared(_))).count()
    }

    pub fn path_count(&self) -> usize {
        self.links.values().filter(|l| matches!(l, LinkKey::Path(_))).count()
    }
}

/// Draw a key ring for every node: `ring_size` distinct keys sampled
/// uniformly from the pool, independently per node. Each node's draw comes
/// from its own derived stream, so rings do not depend on iteration order.
pub fn assign_key_rings(
    topology: &Topology,
    pool: &KeyPool,
    ring_size: u32,
    rng: &RngStream,
) -> Result<BTreeMap<NodeId, KeyRing>, KeyDistError> {
    let k = ring_size as u64;
    if k == 0 || k > pool.size {
        return Err(KeyDistError::InvalidParams(format!(
            "ring size {k} must lie in 1..=pool size {}",
            pool.size
        )));
    }
    let pool_usize = usize::try_from(pool.size)
        .map_err(|_| KeyDistError::InvalidParams(format!("pool size {} too large", pool.size)))?;
    let mut rings = BTreeMap::new();
    for node in topology.nodes() {
        let mut stream = rng.derive(&format!("ring:{node}"));
        let ring = sample(&mut stream, pool_usize, ring_size as usize)
            .into_iter()
            .map(|i| KeyId(i as u64))
            .collect();
        rings.insert(node, KeyRing { owner: node, ring, path_keys: BTreeSet::new() });
    }
    Ok(rings)
}

/// For every edge of the topology, record a SHARED link if the two rings
/// intersect. When several keys are shared the smallest id is used.
pub fn discover_shared_keys(
    topology: &Topology,
    rings: &BTreeMap<NodeId, KeyRing>,
) -> SecurityMap {
    let mut map = SecurityMap::new();
    for a in topology.nodes() {
        for &b in topology.neighbors(a) {
            if a < b {
                let (ra, rb) = (&rings[&a], &rings[&b]);
                if let Some(&k) = ra.ring.intersection(&rb.ring).next() {
                    map.insert(a, b, LinkKey::Shared(k));
                }
            }
        }
    }
    map
}

/// Mint path keys for adjacent pairs with disjoint rings, provided the two
/// nodes are connected through already-secured links (the path over which
/// the new key would be delivered). Fresh ids are assigned from `pool.size`
/// upward, in ascending order of the node pair; both endpoints' rings gain
/// the new key. Returns the newly secured pairs.
pub fn establish_path_keys(
    topology: &Topology,
    rings: &mut BTreeMap<NodeId, KeyRing>,
    security: &mut SecurityMap,
    pool: &KeyPool,
) -> Vec<(NodeId, NodeId, KeyId)> {
    let components = secure_components(topology, security);
    let mut next_id = pool.size
        + security
            .iter()
            .filter(|(_, l)| matches!(l, LinkKey::Path(_)))
            .count() as u64;
    let mut minted = Vec::new();
    for a in topology.nodes() {
        for &b in topology.neighbors(a) {
            if a < b && security.link(a, b).is_none() && components[&a] == components[&b] {
                let key = KeyId(next_id);
                next_id += 1;
                security.insert(a, b, LinkKey::Path(key));
                rings.get_mut(&a).expect("ring for node").path_keys.insert(key);
                rings.get_mut(&b).expect("ring for node").path_keys.insert(key);
                minted.push((a, b, key));
            }
        }
    }
    minted
}

/// Union-find over nodes, joining endpoints of every secured link.
fn secure_components(topology: &Topology, security: &SecurityMap) -> BTreeMap<NodeId, NodeId> {
    let mut parent: BTreeMap<NodeId, NodeId> = topology.nodes().map(|n| (n, n)).collect();
    fn find(parent: &mut BTreeMap<NodeId, NodeId>, mut x: NodeId) -> NodeId {
        while parent[&x] != x {
            let gp = parent[&parent[&x]];
            parent.insert(x, gp);
            x = gp;
        }
        x
    }
    for (&(a, b), _) in security.iter() {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent.insert(ra.max(rb), ra.min(rb));
        }
    }
    let roots: Vec<(NodeId, NodeId)> =
        topology.nodes().map(|n| (n, find(&mut parent, n))).collect();
    roots.into_iter().collect()
}

fn falling_factorial(n: u64, terms: u64) -> BigInt {
    let mut acc = BigInt::one();
    for i in 0..terms {
        acc *= BigInt::from(n - i);
    }
    acc
}

/// Probability that two independently drawn rings of `ring_size` keys from a
/// pool of `pool_size` share at least one key. Computed exactly as
/// `1 - C(pool-ring, ring) / C(pool, ring)` in big-integer arithmetic, then
/// rounded once to `f64`.
pub fn p_connect_closed_form(pool_size: u64, ring_size: u64) -> Result<f64, KeyDistError> {
    if ring_size == 0 || pool_size < 2 * ring_size {
        return Err(KeyDistError::InvalidParams(format!(
            "need 0 < ring size and pool size >= 2*ring size, got pool {pool_size}, ring {ring_size}"
        )));
    }
    // C(K-k, k) / C(K, k) = (K-k)!/(K-2k)! / (K!/(K-k)!) as falling factorials.
    let num = falling_factorial(pool_size - ring_size, ring_size);
    let den = falling_factorial(pool_size, ring_size);
    let miss = BigRational::new(num, den);
    let p = (BigRational::one() - miss)
        .to_f64()
        .ok_or_else(|| KeyDistError::InvalidParams("probability not representable".into()))?;
    Ok(p)
}

/// Probability that a fixed third node's ring contains one particular pool
/// key: `ring_size / pool_size`.
pub fn p_overhear(pool_size: u64, ring_size: u64) -> Result<f64, KeyDistError> {
    if ring_size == 0 || ring_size > pool_size {
        return Err(KeyDistError::InvalidParams(format!(
            "need 0 < ring size <= pool size, got pool {pool_size}, ring {ring_size}"
        )));
    }
    Ok(ring_size as f64 / pool_size as f64)
}

/// Measured ring-overlap and third-party-overhearing rates next to their
/// closed-form expectations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyStats {
    pub samples: u64,
    /// Pairs whose rings intersected.
    pub shared_pairs: u64,
    pub share_fraction: f64,
    pub expected_share: f64,
    /// Among shared pairs, how often a third ring held the link key.
    pub overheard: u64,
    pub overhear_fraction: f64,
    pub expected_overhear: f64,
}

/// Monte-Carlo estimate of the two key-graph probabilities: draw pairs of
/// fresh rings and test for overlap; for each overlapping pair, treat the
/// smallest common key as the link key of one message and test whether an
/// independently drawn third ring can read it. Deterministic in `rng`.
pub fn sample_key_statistics(
    pool: &KeyPool,
    ring_size: u32,
    samples: u64,
    rng: &RngStream,
) -> Result<KeyStats, KeyDistError> {
    let k = ring_size as u64;
    if k == 0 || k > pool.size {
        return Err(KeyDistError::InvalidParams(format!(
            "ring size {k} must lie in 1..=pool size {}",
            pool.size
        )));
    }
    let pool_usize = usize::try_from(pool.size)
        .map_err(|_| KeyDistError::InvalidParams(format!("pool size {} too large", pool.size)))?;
    let draw = |stream: &mut RngStream| -> BTreeSet<u64> {
        sample(stream, pool_usize, ring_size as usize).into_iter().map(|i| i as u64).collect()
    };
    let mut shared_pairs = 0u64;
    let mut overheard = 0u64;
    for i in 0..samples {
        let pair_rng = rng.derive(&format!("pair:{i}"));
        let a = draw(&mut pair_rng.derive("a"));
        let b = draw(&mut pair_rng.derive("b"));
        if let Some(&link) = a.intersection(&b).next() {
            shared_pairs += 1;
            let c = draw(&mut pair_rng.derive("c"));
            if c.contains(&link) {
                overheard += 1;
            }
        }
    }
    let expected_share = if pool.size >= 2 * k {
        p_connect_closed_form(pool.size, k)?
    } else {
        1.0
    };
    Ok(KeyStats {
        samples,
        shared_pairs,
        share_fraction: shared_pairs as f64 / samples.max(1) as f64,
        expected_share,
        overheard,
        overhear_fraction: overheard as f64 / shared_pairs.max(1) as f64,
        expected_overhear: p_overhear(pool.size, k)?,
    })
}

/// Mint path keys so a group that aggregates together (a cluster) becomes
/// pairwise keyed. Members are each adjacent to the leader but not
/// necessarily to each other, so an unkeyed member pair gets a fresh key
/// only when both sides already have secured links to `via` (the leader),
/// the relay the new key would travel through. Pairs involving `via`
/// itself cannot be helped this way and are left unkeyed.
pub fn establish_group_keys(
    group: &[NodeId],
    via: NodeId,
    rings: &mut BTreeMap<NodeId, KeyRing>,
    security: &mut SecurityMap,
    pool: &KeyPool,
) -> Result<Vec<(NodeId, NodeId, KeyId)>, KeyDistError> {
    if !group.contains(&via) {
        return Err(KeyDistError::InvalidParams(format!(
            "relay {via} is not part of the group"
        )));
    }
    let mut next_id = pool.size
        + security.iter().filter(|(_, l)| matches!(l, LinkKey::Path(_))).count() as u64;
    let mut minted = Vec::new();
    let mut sorted: Vec<NodeId> = group.to_vec();
    sorted.sort_unstable();
    for (i, &a) in sorted.iter().enumerate() {
        for &b in &sorted[i + 1..] {
            if a == via || b == via || security.link(a, b).is_some() {
                continue;
            }
            if security.link(a, via).is_none() || security.link(b, via).is_none() {
                continue;
            }
            let key = KeyId(next_id);
            next_id += 1;
            security.insert(a, b, LinkKey::Path(key));
            rings.get_mut(&a).expect("ring for node").path_keys.insert(key);
            rings.get_mut(&b).expect("ring for node").path_keys.insert(key);
            minted.push((a, b, key));
        }
    }
    Ok(minted)
}

/// Test/scenario helper: give every unordered pair of `nodes` its own
/// distinct SHARED key, with ids counted up from `first_id`. Returns the
/// rings and the security map. Nodes outside `nodes` get empty rings only
/// if listed in `onlookers`.
pub fn synthetic_pairwise_security(
    nodes: &[NodeId],
    onlookers: &[NodeId],
    first_id: u64,
) -> (BTreeMap<NodeId, KeyRing>, SecurityMap) {
    let mut rings: BTreeMap<NodeId, KeyRing> = nodes
        .iter()
        .chain(onlookers.iter())
        .map(|&n| (n, KeyRing { owner: n, ring: BTreeSet::new(), path_keys: BTreeSet::new() }))
        .collect();
    let mut map = SecurityMap::new();
    let mut next = first_id;
    for i in 0..nodes.len() {
        for j in (i + 1)..nodes.len() {
            let key = KeyId(next);
            next += 1;
            map.insert(nodes[i], nodes[j], LinkKey::Shared(key));
            rings.get_mut(&nodes[i]).expect("listed node").ring.insert(key);
            rings.get_mut(&nodes[j]).expect("listed node").ring.insert(key);
        }
    }
    (rings, map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Topology;

    fn line(n: u32) -> Topology {
        let edges: Vec<(u32, u32)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        Topology::from_edges(n, 0, &edges).unwrap()
    }

    #[test]
    fn rings_have_exact_size_and_distinct_keys() {
        let t = line(10);
        let pool = KeyPool::new(100);
        let rings = assign_key_rings(&t, &pool, 10, &RngStream::new(3, "keys")).unwrap();
        assert_eq!(rings.len(), 10);
        for ring in rings.values() {
            assert_eq!(ring.ring.len(), 10);
            assert!(ring.ring.iter().all(|k| pool.is_pool_key(*k)));
            assert!(ring.path_keys.is_empty());
        }
    }

    #[test]
    fn ring_assignment_is_deterministic() {
        let t = line(6);
        let pool = KeyPool::new(50);
        let a = assign_key_rings(&t, &pool, 5, &RngStream::new(11, "keys")).unwrap();
        let b = assign_key_rings(&t, &pool, 5, &RngStream::new(11, "keys")).unwrap();
        for n in t.nodes() {
            assert_eq!(a[&n].ring, b[&n].ring);
        }
    }

    #[test]
    fn invalid_ring_parameters_rejected() {
        let t = line(4);
        assert!(assign_key_rings(&t, &KeyPool::new(10), 0, &RngStream::new(1, "k")).is_err());
        assert!(assign_key_rings(&t, &KeyPool::new(10), 11, &RngStream::new(1, "k")).is_err());
    }

    #[test]
    fn shared_key_is_smallest_common_id() {
        let t = line(4);
        let mk = |owner: u32, keys: &[u64]| KeyRing {
            owner: NodeId(owner),
            ring: keys.iter().map(|&k| KeyId(k)).collect(),
            path_keys: BTreeSet::new(),
        };
        let rings: BTreeMap<NodeId, KeyRing> = [
            (NodeId(0), mk(0, &[5, 9, 12])),
            (NodeId(1), mk(1, &[9, 12, 30])),
            (NodeId(2), mk(2, &[1, 2])),
            (NodeId(3), mk(3, &[3, 4])),
        ]
        .into();
        let map = discover_shared_keys(&t, &rings);
        assert_eq!(map.link(NodeId(0), NodeId(1)), Some(LinkKey::Shared(KeyId(9))));
        assert_eq!(map.link(NodeId(1), NodeId(2)), None);
        assert_eq!(map.link(NodeId(0), NodeId(2)), None);
    }

    #[test]
    fn path_keys_bridge_disjoint_rings() {
        // Shared links 0-1, 2-3 and 0-3 put all four nodes in one secure
        // component, so the unsecured middle edge 1-2 can be given a path
        // key delivered around the loop.
        let t = Topology::from_edges(4, 0, &[(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        let mk = |owner: u32, keys: &[u64]| KeyRing {
            owner: NodeId(owner),
            ring: keys.iter().map(|&k| KeyId(k)).collect(),
            path_keys: BTreeSet::new(),
        };
        let mut rings: BTreeMap<NodeId, KeyRing> = [
            (NodeId(0), mk(0, &[1, 50])),
            (NodeId(1), mk(1, &[1])),
            (NodeId(2), mk(2, &[2])),
            (NodeId(3), mk(3, &[2, 50])),
        ]
        .into();
        let pool = KeyPool::new(100);
        let mut map = discover_shared_keys(&t, &rings);
        assert_eq!(map.len(), 3); // 0-1, 2-3, 0-3
        let minted = establish_path_keys(&t, &mut rings, &mut map, &pool);
        assert_eq!(minted, vec![(NodeId(1), NodeId(2), KeyId(100))]);
        assert_eq!(map.link(NodeId(1), NodeId(2)), Some(LinkKey::Path(KeyId(100))));
        assert!(rings[&NodeId(1)].holds(KeyId(100)));
        assert!(rings[&NodeId(2)].holds(KeyId(100)));
        assert!(!pool.is_pool_key(KeyId(100)));
    }

    #[test]
    fn path_keys_not_minted_across_secure_component_gap() {
        // Two secured islands joined by a single edge with disjoint rings:
        // there is no secured path to carry the new key, so none is minted.
        let t = Topology::from_edges(4, 0, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let mk = |owner: u32, keys: &[u64]| KeyRing {
            owner: NodeId(owner),
            ring: keys.iter().map(|&k| KeyId(k)).collect(),
            path_keys: BTreeSet::new(),
        };
        let mut rings: BTreeMap<NodeId, KeyRing> = [
            (NodeId(0), mk(0, &[1])),
            (NodeId(1), mk(1, &[1])),
            (NodeId(2), mk(2, &[2])),
            (NodeId(3), mk(3, &[2])),
        ]
        .into();
        let pool = KeyPool::new(100);
        let mut map = discover_shared_keys(&t, &rings);
        let minted = establish_path_keys(&t, &mut rings, &mut map, &pool);
        assert!(minted.is_empty());
        assert_eq!(map.link(NodeId(1), NodeId(2)), None);
    }

    #[test]
    fn connect_probability_small_cases_exact() {
        // Pool {0,1}, rings of one key: overlap iff both drew the same key.
        assert!((p_connect_closed_form(2, 1).unwrap() - 0.5).abs() < 1e-15);
        // Pool of 4, rings of 2: 1 - C(2,2)/C(4,2) = 1 - 1/6.
        assert!((p_connect_closed_form(4, 2).unwrap() - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn connect_probability_rejects_bad_params() {
        assert!(p_connect_closed_form(10, 0).is_err());
        assert!(p_connect_closed_form(10, 6).is_err());
    }

    #[test]
    fn overhear_probability_is_ring_fraction() {
        assert!((p_overhear(1000, 50).unwrap() - 0.05).abs() < 1e-15);
        assert!(p_overhear(10, 0).is_err());
        assert!(p_overhear(10, 11).is_err());
    }

    #[test]
    fn decrypt_requires_ring_or_path_key() {
        let mut ring = KeyRing {
            owner: NodeId(1),
            ring: [KeyId(3)].into(),
            path_keys: BTreeSet::new(),
        };
        assert!(can_decrypt(&ring, KeyId(3)));
        assert!(!can_decrypt(&ring, KeyId(4)));
        ring.path_keys.insert(KeyId(1000));
        assert!(can_decrypt(&ring, KeyId(1000)));
    }

    #[test]
    fn synthetic_security_covers_all_pairs() {
        let nodes = [NodeId(1), NodeId(2), NodeId(3)];
        let (rings, map) = synthetic_pairwise_security(&nodes, &[NodeId(9)], 0);
        assert_eq!(map.len(), 3);
        for i in 0..3 {
            for j in (i + 1)..3 {
                let link = map.link(nodes[i], nodes[j]).unwrap();
                assert!(can_decrypt(&rings[&nodes[i]], link.key_id()));
                assert!(can_decrypt(&rings[&nodes[j]], link.key_id()));
                assert!(!can_decrypt(&rings[&NodeId(9)], link.key_id()));
            }
        }
    }

    #[test]
    fn sampled_key_statistics_match_closed_forms() {
        let stats = sample_key_statistics(
            &KeyPool::new(4),
            2,
            4000,
            &RngStream::new(7, "keystats"),
        )
        .unwrap();
        assert_eq!(stats.samples, 4000);
        assert!((stats.expected_share - 5.0 / 6.0).abs() < 1e-12);
        assert!((stats.share_fraction - stats.expected_share).abs() < 0.03);
        assert!((stats.expected_overhear - 0.5).abs() < 1e-12);
        assert!((stats.overhear_fraction - 0.5).abs() < 0.05);
    }

    #[test]
    fn key_statistics_are_deterministic() {
        let a = sample_key_statistics(&KeyPool::new(20), 5, 500, &RngStream::new(9, "ks"))
            .unwrap();
        let b = sample_key_statistics(&KeyPool::new(20), 5, 500, &RngStream::new(9, "ks"))
            .unwrap();
        assert_eq!(a, b);
    }

    fn manual_ring(n: u32, keys: &[u64]) -> (NodeId, KeyRing) {
        (
            NodeId(n),
            KeyRing {
                owner: NodeId(n),
                ring: keys.iter().map(|&k| KeyId(k)).collect(),
                path_keys: BTreeSet::new(),
            },
        )
    }

    #[test]
    fn group_keying_routes_through_the_relay() {
        // 1 is keyed with 2 and with 3; the member pair (2,3) is not.
        let mut rings: BTreeMap<NodeId, KeyRing> =
            [manual_ring(1, &[0, 1]), manual_ring(2, &[0]), manual_ring(3, &[1])].into();
        let mut map = SecurityMap::new();
        map.insert(NodeId(1), NodeId(2), LinkKey::Shared(KeyId(0)));
        map.insert(NodeId(1), NodeId(3), LinkKey::Shared(KeyId(1)));
        let pool = KeyPool::new(10);
        let group = [NodeId(1), NodeId(2), NodeId(3)];
        let minted =
            establish_group_keys(&group, NodeId(1), &mut rings, &mut map, &pool).unwrap();
        assert_eq!(minted, vec![(NodeId(2), NodeId(3), KeyId(10))]);
        assert!(matches!(map.link(NodeId(2), NodeId(3)), Some(LinkKey::Path(KeyId(10)))));
        assert!(can_decrypt(&rings[&NodeId(2)], KeyId(10)));
        assert!(can_decrypt(&rings[&NodeId(3)], KeyId(10)));
        assert!(!can_decrypt(&rings[&NodeId(1)], KeyId(10)));
    }

    #[test]
    fn group_keying_skips_pairs_without_relay_links() {
        // 3 has no secured link to the relay, so (2,3) cannot be keyed;
        // (2,4) can.
        let mut rings: BTreeMap<NodeId, KeyRing> = [
            manual_ring(1, &[0, 2]),
            manual_ring(2, &[0]),
            manual_ring(3, &[5]),
            manual_ring(4, &[2]),
        ]
        .into();
        let mut map = SecurityMap::new();
        map.insert(NodeId(1), NodeId(2), LinkKey::Shared(KeyId(0)));
        map.insert(NodeId(1), NodeId(4), LinkKey::Shared(KeyId(2)));
        let pool = KeyPool::new(10);
        let group = [NodeId(1), NodeId(2), NodeId(3), NodeId(4)];
        let minted =
            establish_group_keys(&group, NodeId(1), &mut rings, &mut map, &pool).unwrap();
        assert_eq!(minted, vec![(NodeId(2), NodeId(4), KeyId(10))]);
        assert!(map.link(NodeId(2), NodeId(3)).is_none());
        assert!(map.link(NodeId(1), NodeId(3)).is_none());
    }

    #[test]
    fn group_keying_requires_the_relay_in_the_group() {
        let mut rings: BTreeMap<NodeId, KeyRing> =
            [manual_ring(2, &[0]), manual_ring(3, &[1])].into();
        let mut map = SecurityMap::new();
        let pool = KeyPool::new(10);
        let r = establish_group_keys(
            &[NodeId(2), NodeId(3)],
            NodeId(1),
            &mut rings,
            &mut map,
            &pool,
        );
        assert!(matches!(r, Err(KeyDistError::InvalidParams(_))));
    }
}
