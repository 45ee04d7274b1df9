//! Property tests over random spaces: neighbourhood containment and
//! symmetry, constant degree on periodic grids, and unit-sum destination
//! distributions.

use mela_core::ast::DestinationExpr;
use mela_core::expr::{EvalError, RateExpr};
use mela_core::space::{
    build_space, eval_destination, Boundary, GraphDecl, NeighbourhoodKind, NeighbourhoodSpec,
    Space, SpaceDecl,
};

use proptest::prelude::*;

fn arb_grid_space() -> impl Strategy<Value = Space> {
    (
        1u32..6,
        1u32..6,
        prop_oneof![
            Just(NeighbourhoodKind::VonNeumann),
            Just(NeighbourhoodKind::Moore)
        ],
        prop_oneof![Just(Boundary::Periodic), Just(Boundary::Closed)],
    )
        .prop_map(|(w, h, kind, boundary)| {
            build_space(
                SpaceDecl::Grid2d(w, h),
                NeighbourhoodSpec { kind, boundary },
                (0, 0),
            )
            .expect("builds")
        })
}

fn arb_any_space() -> impl Strategy<Value = Space> {
    prop_oneof![
        arb_grid_space(),
        (1u32..8).prop_map(|n| build_space(
            SpaceDecl::Line(n),
            NeighbourhoodSpec::default(),
            (0, 0)
        )
        .expect("builds")),
        (2usize..6).prop_map(|n| {
            // complete directed graph on n vertices
            let adjacency = (1..=n as i64)
                .map(|v| (v, (1..=n as i64).filter(|u| *u != v).collect()))
                .collect();
            build_space(
                SpaceDecl::Graph(GraphDecl { adjacency }),
                NeighbourhoodSpec {
                    kind: NeighbourhoodKind::GraphAdjacency,
                    boundary: Boundary::Periodic,
                },
                (0, 0),
            )
            .expect("builds")
        }),
    ]
}

fn no_eval(_: &RateExpr) -> Result<f64, EvalError> {
    unreachable!("uniform destinations evaluate no expressions")
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(256) })]

    #[test]
    fn neighbours_stay_inside_the_space(space in arb_any_space(), idx in any::<prop::sample::Index>()) {
        let l = space.locations()[idx.index(space.len())];
        for n in space.neighbours(&l).unwrap() {
            prop_assert!(space.contains(&n));
        }
    }

    #[test]
    fn periodic_grids_have_constant_degree(
        (w, h, kind) in (1u32..6, 1u32..6, prop_oneof![
            Just(NeighbourhoodKind::VonNeumann),
            Just(NeighbourhoodKind::Moore)
        ])
    ) {
        let space = build_space(
            SpaceDecl::Grid2d(w, h),
            NeighbourhoodSpec { kind, boundary: Boundary::Periodic },
            (0, 0),
        ).unwrap();
        let degrees: Vec<usize> = space
            .locations()
            .iter()
            .map(|l| space.neighbours(l).unwrap().len())
            .collect();
        prop_assert!(degrees.windows(2).all(|w| w[0] == w[1]), "{degrees:?}");
    }

    #[test]
    fn periodic_grid_neighbourhood_is_symmetric(
        space in arb_grid_space(),
        i in any::<prop::sample::Index>(),
        j in any::<prop::sample::Index>(),
    ) {
        let a = space.locations()[i.index(space.len())];
        let b = space.locations()[j.index(space.len())];
        let a_in_b = space.neighbours(&b).unwrap().contains(&a);
        let b_in_a = space.neighbours(&a).unwrap().contains(&b);
        prop_assert_eq!(a_in_b, b_in_a);
    }

    #[test]
    fn uniform_destinations_sum_to_one(space in arb_any_space(), idx in any::<prop::sample::Index>()) {
        let here = space.locations()[idx.index(space.len())];
        let neighbours = space.neighbours(&here).unwrap();
        prop_assume!(!neighbours.is_empty());
        let dist = eval_destination(&space, &DestinationExpr::New, here, &mut no_eval).unwrap();
        let sum: f64 = dist.entries().iter().map(|(_, p)| p).sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12, "sum {sum}");
        for (l, p) in dist.entries() {
            prop_assert!(space.contains(l));
            prop_assert!(*p > 0.0);
        }
    }

    #[test]
    fn empirical_destinations_normalise_within_tolerance(
        weights in proptest::collection::vec(0.01f64..1.0, 2..5)
    ) {
        let space = build_space(
            SpaceDecl::Line(4),
            NeighbourhoodSpec::default(),
            (0, 0),
        ).unwrap();
        let total: f64 = weights.iter().sum();
        let items: Vec<(mela_core::space::Location, RateExpr)> = weights
            .iter()
            .enumerate()
            .map(|(i, w)| {
                (
                    mela_core::space::Location::One(i as i64 + 1),
                    RateExpr::Num(w / total),
                )
            })
            .collect();
        let dest = DestinationExpr::Empirical(items);
        let dist = eval_destination(&space, &dest, mela_core::space::Location::One(1), &mut |e| {
            match e {
                RateExpr::Num(v) => Ok(*v),
                _ => unreachable!(),
            }
        })
        .unwrap();
        let sum: f64 = dist.entries().iter().map(|(_, p)| p).sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12, "sum {sum}");
    }
}
