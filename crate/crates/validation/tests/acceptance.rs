use std::io::Write;
use std::time::Instant;

use privsplit_validation::{
    collaboration_ablation, determinism, gradients, jsd_identity, method_ordering, optimal_discriminator, p3_exactness,
    proportion_robustness, psnr_gap, toy_experiment, toy_run, ImageRuns, Outcome, Verdict,
};

fn report(id: u32, title: &'static str, outcome: Outcome) -> Verdict {
    let v = outcome.unwrap_or_else(|e| Verdict {
        id,
        title,
        passed: false,
        detail: format!("error: {e}"),
    });
    // bypass the harness capture so the lines show without --nocapture
    writeln!(std::io::stderr(), "{}", v.line()).ok();
    v
}

#[test]
fn acceptance_criteria() {
    let mut verdicts = vec![
        report(1, "gradients", gradients()),
        report(2, "identity", jsd_identity()),
        report(3, "optimal discriminator", optimal_discriminator()),
    ];

    let start = Instant::now();
    let toy = toy_run().map(|run| toy_experiment(&run, start.elapsed().as_secs_f64()));
    verdicts.push(report(4, "toy clusters", toy));

    match ImageRuns::train() {
        Ok(runs) => {
            verdicts.push(report(5, "collaborative ablation", Ok(collaboration_ablation(&runs))));
            verdicts.push(report(6, "PSNR gap", Ok(psnr_gap(&runs))));
            verdicts.push(report(7, "method ordering", method_ordering(&runs)));
        }
        Err(e) => {
            let msg = e.to_string();
            verdicts.push(report(5, "collaborative ablation", Err(msg.clone().into())));
            verdicts.push(report(6, "PSNR gap", Err(msg.clone().into())));
            verdicts.push(report(7, "method ordering", Err(msg.into())));
        }
    }

    verdicts.push(report(8, "proportion sweep", proportion_robustness()));
    verdicts.push(report(9, "P3 exactness", p3_exactness()));
    verdicts.push(report(10, "determinism", determinism()));

    let failed: Vec<u32> = verdicts.iter().filter(|v| !v.passed).map(|v| v.id).collect();
    writeln!(
        std::io::stderr(),
        "acceptance: {} of {} criteria passed",
        verdicts.len() - failed.len(),
        verdicts.len()
    )
    .ok();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
