mod oracles;

use proptest::prelude::*;
use qnet_core::netmodel::{
    assign_states, enumerate_simple_paths, generate_er, load_network, save_network, FidelitySpec,
    UnionFind,
};

fn degree_for(n: usize) -> f64 {
    // Keeps n * k / 2 an integer and the graph sparse enough to enumerate.
    if n % 2 == 0 {
        3.0
    } else {
        2.0
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generator_is_deterministic_and_connected(n in 4usize..12, seed in any::<u64>()) {
        let k = degree_for(n);
        let a = generate_er(n, k, seed).unwrap();
        let b = generate_er(n, k, seed).unwrap();
        prop_assert_eq!(a.edges(), b.edges());
        prop_assert_eq!(a.edge_count(), (n as f64 * k / 2.0) as usize);
        let mut uf = UnionFind::new(n);
        for &(u, v) in a.edges() {
            uf.union(u, v);
        }
        prop_assert_eq!(uf.components(), 1);
    }

    #[test]
    fn paths_are_sound_and_complete(n in 4usize..9, seed in any::<u64>(), a in 0usize..9, b in 0usize..9) {
        let net = generate_er(n, degree_for(n), seed).unwrap();
        let (a, b) = (a % n, b % n);
        prop_assume!(a != b);
        let set = enumerate_simple_paths(&net, a, b).unwrap();
        for path in &set.paths {
            prop_assert_eq!(path.nodes[0], a);
            prop_assert_eq!(*path.nodes.last().unwrap(), b);
            prop_assert_eq!(path.edges.len() + 1, path.nodes.len());
            for (w, &e) in path.nodes.windows(2).zip(&path.edges) {
                prop_assert_eq!(net.edge_index(w[0], w[1]), Some(e));
            }
            let mut seen = path.nodes.clone();
            seen.sort_unstable();
            seen.dedup();
            prop_assert_eq!(seen.len(), path.nodes.len());
        }
        let found: Vec<Vec<usize>> = set.paths.iter().map(|p| p.nodes.clone()).collect();
        let mut sorted = found.clone();
        sorted.sort();
        prop_assert_eq!(&found, &sorted, "paths not in lexicographic order");
        prop_assert_eq!(found, oracles::brute_force_paths(&net, a, b));
    }

    #[test]
    fn bell_count_is_rounded_fraction(seed in any::<u64>(), frac in 0.0..=1.0f64, f0 in 0.55..0.99f64) {
        let net = generate_er(10, 3.0, seed).unwrap();
        let prepared = assign_states(&net, frac, FidelitySpec::Constant { f0 }, seed).unwrap();
        let bells = prepared.states().iter().filter(|s| s.is_bell()).count();
        prop_assert_eq!(bells, (frac * 15.0).round() as usize);
        prop_assert_eq!(prepared.edges(), net.edges());
    }

    #[test]
    fn document_round_trip(seed in any::<u64>(), mean in 0.6..0.9f64) {
        let net = generate_er(8, 3.0, seed).unwrap().with_budget(250).unwrap();
        let spec = FidelitySpec::Gaussian { mean, sigma: 0.1 };
        let net = assign_states(&net, 0.5, spec, seed ^ 1).unwrap();
        let bytes = save_network(&net);
        let back = load_network(&bytes).unwrap();
        prop_assert_eq!(&back, &net);
        prop_assert_eq!(save_network(&back), bytes);
    }
}

#[test]
fn rejects_bad_documents() {
    let dup = br#"{"version":1,"n":3,"m_budget":10,"edges":[
        {"u":0,"v":1,"kind":"bell"},{"u":0,"v":1,"kind":"bell"},{"u":1,"v":2,"kind":"bell"}]}"#;
    assert!(load_network(dup).is_err());
    let weak = br#"{"version":1,"n":2,"m_budget":10,"edges":[{"u":0,"v":1,"kind":"werner","p0":0.2}]}"#;
    let err = load_network(weak).unwrap_err().to_string();
    assert!(err.contains("p0"), "{err}");
}
