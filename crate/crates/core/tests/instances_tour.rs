mod common;

use nbody_tsp::instances::*;
use nbody_tsp::tour::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn instance_strategy() -> impl Strategy<Value = CityInstance> {
    (3usize..30, any::<u64>()).prop_map(|(n, seed)| gen_random_uniform(n, seed).unwrap())
}

proptest! {
    #[test]
    fn triangle_inequality(inst in instance_strategy(), picks in prop::collection::vec((0usize..1000, 0usize..1000, 0usize..1000), 20)) {
        let d = distance_matrix(&inst);
        let n = inst.len();
        for (a, b, c) in picks {
            let (i, j, k) = (a % n, b % n, c % n);
            prop_assert!(d.get(i, k) <= d.get(i, j) + d.get(j, k) + 1e-12);
            prop_assert_eq!(d.get(i, j), d.get(j, i));
        }
        for i in 0..n {
            prop_assert_eq!(d.get(i, i), 0.0);
        }
    }

    #[test]
    fn tsplib_round_trip(inst in instance_strategy()) {
        let back = parse_tsplib(&inst.to_tsplib()).unwrap();
        prop_assert_eq!(back.cities(), inst.cities());
        prop_assert_eq!(back.name(), inst.name());
    }

    #[test]
    fn cost_invariant_under_rotation_and_reversal(inst in instance_strategy(), seed in any::<u64>()) {
        let mut g = common::rng(seed);
        let mut order: Vec<usize> = (0..inst.len()).collect();
        order.shuffle(&mut g);
        let base = Tour::new(&inst, order.clone()).unwrap();
        let k = g.random_range(0..order.len());
        let mut rotated = order.clone();
        rotated.rotate_left(k);
        let mut reversed = order.clone();
        reversed.reverse();
        for o in [rotated, reversed] {
            let t = Tour::new(&inst, o).unwrap();
            prop_assert_eq!(t.order(), base.order());
            prop_assert_eq!(t.cost(), base.cost());
        }
        let raw = tour_cost(&inst, &order).unwrap();
        prop_assert!((raw - base.cost()).abs() <= 1e-12 * raw);
    }

    #[test]
    fn tour_text_round_trip(inst in instance_strategy()) {
        let t = Tour::new(&inst, (0..inst.len()).rev().collect()).unwrap();
        let file: TourFile = t.to_text().parse().unwrap();
        prop_assert_eq!(file.cost, t.cost());
        prop_assert_eq!(&file.order[..], t.order());
    }
}

#[test]
fn extract_tour_fuzz_always_permutation() {
    let mut g = common::rng(77);
    for case in 0..10_000 {
        let n = g.random_range(3..25);
        let inst = gen_random_uniform(n, case).unwrap();
        let positions: Vec<Point> = (0..n)
            .map(|_| match g.random_range(0..4) {
                // repeated points and shared angles exercise the tie rules
                0 => Point::new(1.0, 0.0),
                1 => Point::new(g.random_range(0.1..2.0), 0.0),
                _ => Point::new(g.random_range(-1e3..1e3), g.random_range(-1e3..1e3)),
            })
            .collect();
        let t = extract_tour(&inst, &positions, Point::ORIGIN).unwrap();
        let mut seen = t.order().to_vec();
        seen.sort_unstable();
        assert_eq!(seen, (0..n).collect::<Vec<_>>());
        assert_eq!(t.order()[0], 0);
    }
}

#[test]
fn extract_tour_rotation_gives_same_cycle() {
    let inst = gen_random_uniform(12, 4).unwrap();
    let mut g = common::rng(4);
    let positions: Vec<Point> =
        (0..12).map(|_| Point::new(g.random_range(-1.0..1.0), g.random_range(-1.0..1.0))).collect();
    let base = extract_tour(&inst, &positions, Point::ORIGIN).unwrap();
    let (s, c) = 0.37f64.sin_cos();
    let rotated: Vec<Point> = positions.iter().map(|p| Point::new(c * p.x - s * p.y, s * p.x + c * p.y)).collect();
    assert_eq!(extract_tour(&inst, &rotated, Point::ORIGIN).unwrap(), base);
}

#[test]
fn extract_tour_rejects_bad_input() {
    let inst = gen_random_uniform(4, 1).unwrap();
    let pts = vec![Point::new(1.0, 0.0); 3];
    assert!(matches!(extract_tour(&inst, &pts, Point::ORIGIN), Err(TourError::PositionCount { .. })));
    let nan = vec![Point::new(f64::NAN, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0), Point::new(-1.0, 0.0)];
    assert!(extract_tour(&inst, &nan, Point::ORIGIN).is_err());
}

#[test]
fn percent_error_reference_values() {
    let pe = percent_error(12.0 + 4.0 * 2f64.sqrt(), 16.0).unwrap();
    assert!((pe - 10.3553).abs() < 1e-3);
    let pe = percent_error(36967.234, 33523.708).unwrap();
    assert!((pe - 10.272).abs() < 1e-3);
    assert!(percent_error(1.0, 0.0).is_err());
}

#[test]
fn tour_validation_reports_problems() {
    let inst = gen_grid(2, 2).unwrap();
    match Tour::new(&inst, vec![0, 1, 1, 7]) {
        Err(TourError::NotAPermutation { duplicates, missing, out_of_range, .. }) => {
            assert_eq!(duplicates, [1]);
            assert_eq!(missing, [2, 3]);
            assert_eq!(out_of_range, [7]);
        }
        other => panic!("{other:?}"),
    }
    assert!("cost=4\n0 1 x".parse::<TourFile>().is_err());
    assert!("4\n0 1 2".parse::<TourFile>().is_err());
}

#[test]
fn tsplib_errors_carry_lines() {
    let dup = "NAME : d\nTYPE : TSP\nDIMENSION : 3\nEDGE_WEIGHT_TYPE : EUC_2D\nNODE_COORD_SECTION\n1 0 0\n2 1 0\n3 0 0\nEOF\n";
    match parse_tsplib(dup) {
        Err(InstanceError::Parse { line, .. }) => assert_eq!(line, 8),
        other => panic!("{other:?}"),
    }
    let file = read_tsplib(dup).unwrap();
    let mut cities = file.cities.clone();
    jitter_duplicates(&mut cities, 1);
    assert!(CityInstance::new("d", cities).is_ok());

    let bad_dim = dup.replace("DIMENSION : 3", "DIMENSION : 4");
    assert!(parse_tsplib(&bad_dim).is_err());
    let explicit = dup.replace("EUC_2D", "EXPLICIT");
    assert!(parse_tsplib(&explicit).is_err());
}

#[test]
fn att48_reference() {
    let inst = att48();
    assert_eq!(inst.len(), 48);
    assert_eq!(inst.optimal_cost(), Some(ATT48_OPTIMAL_EUCLIDEAN));
    assert!(read_tsplib(&inst.to_tsplib()).is_ok());
}
