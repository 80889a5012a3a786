//! Gateway-layer properties: DHT lookups, peer-discovery closure and
//! store-carry-forward accounting.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use oecsim_core::beacon::NodeId;
use oecsim_core::engine::SimTime;
use oecsim_core::gateway::{
    exchange_round, xor_closest, ContactGraph, Dht, DhtKey, DhtLookup, ForwardNetwork, Layer, RoutingTable,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn t(s: f64) -> SimTime {
    SimTime::from_secs(s)
}

/// Reachability sets by breadth-first search.
fn closure_oracle(nodes: &[NodeId], edges: &[(usize, usize)]) -> BTreeMap<NodeId, BTreeSet<NodeId>> {
    let mut adj = vec![Vec::new(); nodes.len()];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    (0..nodes.len())
        .map(|s| {
            let mut seen = vec![false; nodes.len()];
            seen[s] = true;
            let mut q = VecDeque::from([s]);
            while let Some(u) = q.pop_front() {
                for &v in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        q.push_back(v);
                    }
                }
            }
            let set = (0..nodes.len()).filter(|&v| v != s && seen[v]).map(|v| nodes[v]).collect();
            (nodes[s], set)
        })
        .collect()
}

fn diameter(n: usize, edges: &[(usize, usize)]) -> usize {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut best = 0;
    for s in 0..n {
        let mut dist = vec![usize::MAX; n];
        dist[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &v in &adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    q.push_back(v);
                }
            }
        }
        best = best.max(dist.into_iter().filter(|&d| d != usize::MAX).max().unwrap_or(0));
    }
    best
}

/// Random spanning tree plus extra edges: always connected.
fn connected_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2usize..=8).prop_flat_map(|n| {
        let parents: Vec<_> = (1..n).map(|i| 0..i).collect();
        let extra = proptest::collection::vec((0..n, 0..n), 0..n);
        (Just(n), parents, extra).prop_map(|(n, parents, extra)| {
            let mut edges: Vec<(usize, usize)> = parents.into_iter().enumerate().map(|(i, p)| (i + 1, p)).collect();
            edges.extend(extra.into_iter().filter(|(a, b)| a != b));
            (n, edges)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn discovery_reaches_closure_within_diameter_rounds((n, edges) in connected_graph(), id_seed in any::<u64>()) {
        let nodes: Vec<NodeId> = (0..n as u64).map(|i| NodeId(id_seed.wrapping_add(i.wrapping_mul(0x9e37_79b9_7f4a_7c15)))).collect();
        prop_assume!(nodes.iter().collect::<BTreeSet<_>>().len() == n);
        let mut tables: BTreeMap<NodeId, RoutingTable> =
            nodes.iter().map(|&id| (id, RoutingTable::new(id, Layer::Gateway))).collect();
        let mut graph = ContactGraph::new();
        for &(a, b) in &edges {
            graph.connect(nodes[a], nodes[b]);
        }
        let rounds = diameter(n, &edges);
        let mut previous: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
        for r in 0..rounds {
            exchange_round(&mut tables, &graph, t(r as f64));
            for (id, table) in &tables {
                let known = table.known_ids();
                // monotone: nothing is forgotten
                if let Some(before) = previous.get(id) {
                    prop_assert!(before.is_subset(&known));
                }
                previous.insert(*id, known);
            }
        }
        let oracle = closure_oracle(&nodes, &edges);
        for (id, table) in &tables {
            prop_assert_eq!(&table.known_ids(), &oracle[id]);
        }
        // one more round teaches nothing
        prop_assert_eq!(exchange_round(&mut tables, &graph, t(rounds as f64)), 0);
    }

    #[test]
    fn forwarding_accounts_for_every_message(seed in any::<u64>(), nodes in 2usize..7, msgs in 1usize..40, capacity_hint in 0u8..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids: Vec<NodeId> = (0..nodes as u64).map(|i| NodeId(1000 + i)).collect();
        let mut net = ForwardNetwork::new();
        for (i, &id) in ids.iter().enumerate() {
            let layer = if i % 2 == 0 { Layer::Gateway } else { Layer::Iot };
            let mut table = RoutingTable::new(id, layer);
            if capacity_hint == 0 {
                table.default_ttl = 30.0;
                table.pending_capacity = 2;
            }
            net.add(table);
        }
        // learn the full topology once, then move contacts around
        let mut full = ContactGraph::new();
        for i in 0..nodes {
            for j in i + 1..nodes {
                full.connect(ids[i], ids[j]);
            }
        }
        for r in 0..nodes {
            exchange_round(&mut net.tables, &full, t(r as f64));
        }
        let mut now = 10.0;
        for _ in 0..msgs {
            let mut contacts = ContactGraph::new();
            for i in 0..nodes {
                for j in i + 1..nodes {
                    if rng.random_bool(0.3) {
                        contacts.connect(ids[i], ids[j]);
                    }
                }
            }
            let src = ids[rng.random_range(0..nodes)];
            let dst = ids[rng.random_range(0..nodes)];
            if src != dst {
                net.inject(src, dst, vec![1, 2, 3], t(now), &contacts).unwrap();
            }
            now += rng.random_range(0.0..60.0);
            net.contact_round(t(now), &contacts);
            let delivered = net.delivered.len() as u64;
            prop_assert_eq!(delivered + net.dropped() + net.pending(), net.injected);
            for table in net.tables.values() {
                prop_assert!(table.balanced());
            }
        }
    }
}

#[test]
fn thousand_puts_on_five_gateways_never_miss() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut dht = Dht::new(2);
    let gateways: Vec<NodeId> = (0..5).map(|_| NodeId(rng.random())).collect();
    for &g in &gateways {
        dht.add_gateway(g);
    }
    let mut false_misses = 0;
    for i in 0..1000u64 {
        let key = DhtKey(rng.random());
        let value = i.to_le_bytes().to_vec();
        let holders = dht.dht_put(key, value.clone(), t(i as f64)).unwrap();
        assert_eq!(holders.len(), 2);
        assert_eq!(holders, xor_closest(key, gateways.iter().copied(), 2).into_iter().collect());
        assert_eq!(dht.placement(key), dht.placement(key));
        match dht.dht_get(key, t(i as f64)) {
            DhtLookup::Found(v) => assert_eq!(v.value, value),
            _ => false_misses += 1,
        }
    }
    assert_eq!(false_misses, 0);
}

#[test]
fn one_gateway_down_never_reports_never_stored() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut dht = Dht::new(2);
    let gateways: Vec<NodeId> = (0..5).map(|_| NodeId(rng.random())).collect();
    for &g in &gateways {
        dht.add_gateway(g);
    }
    let keys: Vec<DhtKey> = (0..300).map(|_| DhtKey(rng.random())).collect();
    for &k in &keys {
        dht.dht_put(k, vec![9], t(0.0)).unwrap();
    }
    dht.set_reachable(gateways[2], false);
    for &k in &keys {
        // with r = 2 a single outage leaves a replica up
        assert!(matches!(dht.dht_get(k, t(1.0)), DhtLookup::Found(_)));
    }
    dht.set_reachable(gateways[3], false);
    for &k in &keys {
        assert_ne!(dht.dht_get(k, t(2.0)), DhtLookup::NeverStored);
    }
}
