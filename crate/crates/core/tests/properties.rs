use layerbatch_core::*;
use proptest::prelude::*;

fn grid() -> impl Strategy<Value = Vec<(usize, f64)>> {
    prop::collection::btree_map(2usize..40, 0.1f64..50.0, 0..5)
        .prop_flat_map(|m| (Just(m), 0.1f64..50.0))
        .prop_map(|(m, h1)| std::iter::once((1, h1)).chain(m).collect())
}

fn requests(max_layer: usize) -> impl Strategy<Value = Vec<Request64>> {
    prop::collection::vec(1..=max_layer, 0..14).prop_map(|mut ls| {
        ls.sort_unstable_by(|a, b| b.cmp(a));
        ls.into_iter().enumerate().map(|(i, l)| Request::new(i as u64, "net", i as f64, 1e9).at_layer(l)).collect()
    })
}

proptest! {
    #[test]
    fn lookup_hits_grid_and_interpolates_between(points in grid()) {
        let t = CostTable::new(vec![points.clone()], 40).unwrap();
        for &(b, h) in &points {
            prop_assert_eq!(lookup_h(&t, 1, b), Some(h));
        }
        for w in points.windows(2) {
            let ((b0, h0), (b1, h1)) = (w[0], w[1]);
            for b in b0..=b1 {
                let v = lookup_h(&t, 1, b).unwrap();
                prop_assert!(v >= h0.min(h1) - 1e-9 && v <= h0.max(h1) + 1e-9);
            }
        }
        prop_assert_eq!(lookup_h(&t, 1, 41), None);
    }

    #[test]
    fn linear_tables_are_subadditive(c in 0.1f64..10.0, layers in 1usize..5) {
        let t = CostTable::from_fn(layers, 32, |_, b| c * b as f64);
        prop_assert!(check_subadditivity(&t).is_empty());
    }

    #[test]
    fn groups_partition_the_layers(solo in prop::collection::vec(0.1f64..40.0, 1..30), g in 1usize..30) {
        let res = group_layers(&solo, g);
        if g > solo.len() {
            prop_assert!(res.is_err());
        } else {
            let groups = res.unwrap();
            prop_assert_eq!(groups.len(), g);
            let flat: Vec<usize> = groups.iter().flatten().collect();
            prop_assert_eq!(flat, (1..=solo.len()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn sorted_valid_sets_have_non_increasing_layers(rs in requests(6)) {
        let profile = DnnProfile::single("net", "net", 6);
        prop_assert!(validate_request_set(&rs, &profile).is_valid());
        let mut sorted = rs.clone();
        sorted.reverse();
        request_sort(&mut sorted);
        prop_assert!(sorted.windows(2).all(|w| w[0].layer >= w[1].layer));
    }

    #[test]
    fn drop_expired_is_idempotent(deadlines in prop::collection::vec(0.0f64..10.0, 0..20), now in 0.0f64..10.0) {
        let rs: Vec<Request64> = deadlines.iter().enumerate().map(|(i, &d)| Request::new(i as u64, "n", -1.0, d)).collect();
        let (kept, dropped) = drop_expired(rs.clone(), now);
        prop_assert_eq!(kept.len() + dropped.len(), rs.len());
        prop_assert!(dropped.iter().all(|r| r.deadline < now && r.state == RequestState::Dropped));
        let (again, none) = drop_expired(kept.clone(), now);
        prop_assert_eq!(again, kept);
        prop_assert!(none.is_empty());
    }

    #[test]
    fn dp_objective_is_the_sum_of_fifo_completions(rs in requests(5), bound in 1usize..6) {
        let t = CostTable::from_fn(5, 8, |k, b| 1.0 + k as f64 * 0.5 + (b as f64).ln());
        let s = compute_schedule(&rs, &t, bound).unwrap();
        let c: Vec<f64> = rs.iter().map(|r| s.predicted_completion[&r.id]).collect();
        prop_assert!(c.windows(2).all(|w| w[0] <= w[1]));
        let total: f64 = c.iter().sum();
        prop_assert!((total - s.objective).abs() <= 1e-9 * total.max(1.0));
        prop_assert!(s.segments.iter().all(|g| g.max_batch <= bound));
        prop_assert_eq!(s.scheduled_count(), rs.len());
    }

    #[test]
    fn multi_objective_is_no_worse_than_any_fixed_order(ls in prop::collection::vec((0usize..3, 1usize..3), 1..7)) {
        let comp = |id: &str, k: f64| SharedComponent {
            id: ComponentId::from(id),
            layer_names: vec![String::new(); 2],
            cost: CostTable::from_fn(2, 8, move |_, b| k + b as f64),
            output_bits: vec![0.0; 2],
        };
        let p = ProfileSet::from_parts(8, vec![comp("a", 3.0), comp("b", 5.0), comp("c", 1.0)],
            vec![("a", vec!["a"]), ("b", vec!["b"]), ("c", vec!["c"])]).unwrap();
        let rs: Vec<Request64> = ls.iter().enumerate()
            .map(|(i, &(d, l))| Request::new(i as u64, ["a", "b", "c"][d], i as f64, 1e9).at_layer(3 - l))
            .collect();
        let best = schedule_multi(&rs, &p, &MultiConfig::new(8)).unwrap();
        let fixed = schedule_multi(&rs, &p, &MultiConfig { search: Search::ArrivalOrder, ..MultiConfig::new(8) }).unwrap();
        prop_assert!(best.objective <= fixed.objective + 1e-9);
    }
}

fn request_sort(rs: &mut [Request64]) {
    layerbatch_core::model::sort_by_arrival(rs);
}
