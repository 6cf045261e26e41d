use osclab::corpus;
use osclab::osculate::{verify_theorem, Containment, TheoremVerdict};

#[test]
fn confirmed_verdicts_are_always_contained() {
    for scene in corpus::suite().unwrap() {
        let report = verify_theorem(&scene.name, scene.family.as_ref().unwrap(), &scene.config());
        if report.verdict == TheoremVerdict::TheoremConfirmed {
            let r = report.steps.ruledness.data.as_ref().unwrap();
            assert_ne!(r.verdict, Containment::NotContained, "{}", scene.name);
        }
        // Volumes grow with t.
        if let Some(g) = &report.steps.growth.data {
            let mut by_t = g.samples.clone();
            by_t.sort_by(|a, b| a.t.total_cmp(&b.t));
            for w in by_t.windows(2) {
                assert!(w[1].vol >= w[0].vol - 1e-12, "{}: {:?}", scene.name, w);
            }
        }
    }
}
