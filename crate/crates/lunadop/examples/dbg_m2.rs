use lunadop::ephemeris::EphemerisMethod;
use lunadop::montecarlo::*;
use lunadop::solver::*;
use nalgebra::Vector3;

fn main() {
    let s = Scenario { seed: 1, n_trials: 100, n_passes: 1, ephemeris_method: EphemerisMethod::Method1, ..Scenario::default() };
    let k = s.constants;
    let mut correct = 0u32; let mut n = 0u32;
    let mut rel_diffs: Vec<f64> = vec![];
    for trial in 0..100usize {
        let mut rng = trial_rng(s.seed, trial);
        let (geom, _, _, _) = match build_trial_geometry(&s, &mut rng) { Ok(g) => g, Err(_) => continue };
        let truth = geom.receiver;
        let sol = solve_single_pass(&geom.passes[0], &s.solver, &k).unwrap();
        let est = sol.estimate.position();
        let mir = sol.estimate.mirror_position().unwrap();
        let (c_est, c_mir) = (sol.estimate.cost_final, sol.estimate.mirror.unwrap().cost);
        let est_is_true = (est - truth).norm() <= (mir - truth).norm();
        // cost difference of the two minima, oriented truth-side minus mirror-side
        let (c_true, c_mirror) = if est_is_true { (c_est, c_mir) } else { (c_mir, c_est) };
        rel_diffs.push((c_mirror - c_true) / (0.5 * (c_mirror + c_true)));
        if est_is_true { correct += 1; }
        n += 1;
        let _ = Vector3::zeros();
    }
    rel_diffs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med = rel_diffs[rel_diffs.len()/2];
    let lo = rel_diffs[rel_diffs.len()/10];
    let hi = rel_diffs[rel_diffs.len()*9/10];
    println!("pick correct {correct}/{n}; (c_mirror - c_true)/avg: p10 {lo:.4} med {med:.4} p90 {hi:.4}");
}
