mod common;

use common::micro;

#[test]
fn end_to_end_gradients_match_finite_differences() {
    let mut checked = 0;
    let mut seed = 0;
    while checked < 40 {
        seed += 1;
        let case = micro::case(seed);
        if micro::near_kink(&case) {
            continue;
        }
        let err = micro::gradient_error(&case);
        assert!(err <= 1e-4, "seed {seed} ({}): relative error {err:e}", case.model.app);
        checked += 1;
    }
}

#[test]
fn micro_cases_cover_every_app() {
    let apps: std::collections::HashSet<_> = (1..60).map(|s| micro::case(s).model.app).collect();
    assert_eq!(apps.len(), 3);
}
