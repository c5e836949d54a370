use proptest::prelude::*;

use hps_core::geometry::{DomainSpec, SolverTree};
use hps_core::pde::EllipticOperator;
use hps_core::solver::{precompute, solve, SolverOptions};

fn layout() -> impl Strategy<Value = DomainSpec> {
    (4usize..8, 1usize..4, 1usize..4, proptest::collection::vec(any::<bool>(), 9)).prop_filter_map(
        "connected layout",
        |(p, nx, ny, bits)| {
            let mut mask: Vec<bool> = bits[..nx * ny].to_vec();
            mask[0] = true;
            let spec = DomainSpec::from_mask(p, nx, ny, mask, 0.5);
            spec.validate().ok().map(|_| spec)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tree_partitions_are_consistent(spec in layout()) {
        let Ok(tree) = SolverTree::new(spec) else { return Ok(()); };
        for node in &tree.nodes {
            let Some((a, b)) = node.children else { continue };
            let part = node.partition.as_ref().unwrap();
            let mut ext: Vec<usize> = part.i1.iter().chain(&part.i2).chain(&part.i3).copied().collect();
            ext.sort_unstable();
            prop_assert_eq!(&ext, &node.ext);
            prop_assert_eq!(&part.i4, &node.int);
            for g in &part.i4 {
                prop_assert!(tree.node(a).ext.binary_search(g).is_ok());
                prop_assert!(tree.node(b).ext.binary_search(g).is_ok());
            }
        }
        let leaves = tree.nodes.iter().filter(|n| n.is_leaf()).count();
        prop_assert_eq!(leaves, tree.spec.leaf_count());
    }

    #[test]
    fn laplace_reproduces_linear_data(spec in layout(), c in -2.0f64..2.0, d in -2.0f64..2.0) {
        let Ok(tree) = SolverTree::new(spec) else { return Ok(()); };
        let state = precompute(tree, &EllipticOperator::laplace(), &SolverOptions::default()).unwrap();
        let coords = &state.tree.mesh.coords;
        let exact = |g: usize| 1.0 + c * coords[g][0] + d * coords[g][1];
        let f: Vec<f64> = state.tree.boundary().iter().map(|&g| exact(g)).collect();
        let sol = solve(&state, &f).unwrap();
        for (g, u) in sol.u.iter().enumerate() {
            prop_assert!((u - exact(g)).abs() < 1e-11);
        }
        for (v, w) in sol.v_bnd.iter().zip(&sol.w_bnd) {
            prop_assert!((v - c).abs() < 1e-9 && (w - d).abs() < 1e-9);
        }
    }
}
