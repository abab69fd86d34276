use lipext_core::oracle::{brute_force_minimal_extension, OracleConfig};
use lipext_core::plap::{continuation_solve, SolverConfig};
use lipext_core::testing::random_instance;

fn main() {
    let sizes = [1usize, 2, 3, 2, 3];
    let mut worst = [0.0f64; 3];
    for i in 0..20u64 {
        let (g, bd) = random_instance(3000 + i, sizes[(i as usize) % 5], 2 + (i as usize % 2), 1);
        let oc = OracleConfig { refine_levels: 14, ..OracleConfig::default() };
        let orc = brute_force_minimal_extension(&g, &bd, &oc).unwrap();
        let cfg = SolverConfig { p_target: 200.0, ..SolverConfig::default() };
        let run = continuation_solve(&g, &bd, &cfg).unwrap();
        let mut errs = Vec::new();
        for (k, probe) in [10.0, 50.0, 200.0].iter().enumerate() {
            let (_, f) = run.trajectory.iter().find(|(pp, _)| *pp == *probe).unwrap();
            let e = f.sup_distance(&orc.function);
            errs.push(e);
            if e > worst[k] { worst[k] = e; }
        }
        let mono = if errs[2] > errs[1] + 1e-8 || errs[1] > errs[0] + 1e-8 { "  NONMONO" } else { "" };
        println!("inst {i:2}: {:.3e} {:.3e} {:.3e}{}", errs[0], errs[1], errs[2], mono);
    }
    println!("worst per probe: {:.3e} {:.3e} {:.3e}", worst[0], worst[1], worst[2]);
}
