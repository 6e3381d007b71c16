use censorlab_core::exact::{tv_distance, DistVector, ExactModel};
use censorlab_core::models::{build_graph, build_ising, GraphFamily};
use censorlab_core::schedules::{censor, censor_to_blocks, random_schedule};
use censorlab_core::system::INEQ_TOL;
use censorlab_core::transport::kantorovich;
use proptest::prelude::*;

fn p3(beta: f64) -> ExactModel {
    ExactModel::new(build_ising(build_graph(&GraphFamily::Path { n: 3 }).unwrap(), beta, 0.1)).unwrap()
}

fn weights() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.001f64..1.0, 8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kantorovich_is_a_metric_above_tv(a in weights(), b in weights(), c in weights(), beta in 0.0f64..1.5) {
        let m = p3(beta);
        let s = m.space();
        let (a, b, c) = (
            DistVector::from_weights(a, s).unwrap(),
            DistVector::from_weights(b, s).unwrap(),
            DistVector::from_weights(c, s).unwrap(),
        );
        let ab = kantorovich(s, &a, &b).unwrap().0;
        let bc = kantorovich(s, &b, &c).unwrap().0;
        let ac = kantorovich(s, &a, &c).unwrap().0;
        let ba = kantorovich(s, &b, &a).unwrap().0;
        prop_assert!(ac <= ab + bc + INEQ_TOL);
        prop_assert!((ab - ba).abs() <= INEQ_TOL);
        let tv = tv_distance(&a, &b).unwrap();
        prop_assert!(ab >= tv - INEQ_TOL);
        prop_assert!(ab <= 3.0 * tv + INEQ_TOL);
    }

    #[test]
    fn updates_from_top_are_dominated_and_closer(sites in prop::collection::vec(0usize..3, 0..6), beta in 0.0f64..1.5) {
        let m = p3(beta);
        let mut d = m.top().unwrap();
        for v in sites {
            let next = m.update(&d, v);
            prop_assert!(m.stochastic_dominance(&next, &d).unwrap().dominates());
            prop_assert!(m.tv_to_pi(&next).unwrap() <= m.tv_to_pi(&d).unwrap() + INEQ_TOL);
            prop_assert!((next.total() - 1.0).abs() <= 1e-12);
            d = next;
        }
    }

    #[test]
    fn censoring_is_idempotent(seed in any::<u64>(), len in 0usize..60, mask_bits in any::<u64>()) {
        let s = random_schedule(6, len, seed);
        let union = [0, 1, 3, 4];
        let once = censor_to_blocks(&s, &union);
        prop_assert_eq!(censor_to_blocks(&once, &union).steps, once.steps.clone());
        let mask: Vec<bool> = (0..len).map(|i| mask_bits >> (i % 64) & 1 == 1).collect();
        let kept = censor(&s, &mask).unwrap();
        let all = vec![true; kept.len()];
        prop_assert_eq!(censor(&kept, &all).unwrap().steps, kept.steps);
    }
}
