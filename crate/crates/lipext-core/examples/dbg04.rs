use lipext_core::plap::{newton_minimize, SolverConfig};
use lipext_core::testing::random_instance;
use lipext_core::{InteriorInit, VertexFunction};

fn main() {
    let (g, bd) = random_instance(3008, 2, 2, 1);
    let cfg = SolverConfig { p_target: 200.0, ..SolverConfig::default() };
    let mut f = VertexFunction::from_boundary(&g, &bd, InteriorInit::BoundaryMean).unwrap();
    for p in [2.0, 5.0, 10.0, 15.0] {
        f = newton_minimize(&f, p, &cfg).unwrap().function;
    }
    let cfg2 = SolverConfig { max_newton_iters: 40, ..cfg.clone() };
    match newton_minimize(&f, 20.0, &cfg2) {
        Ok(r) => println!("ok {} iters", r.trace.len()),
        Err(e) => println!("ERR {e:?}"),
    }
    let cfg3 = SolverConfig { max_newton_iters: 40, newton_tol: 1e-9, ..cfg.clone() };
    if let Ok(r) = std::panic::catch_unwind(|| {
        let mut ftmp = f.clone();
        let r = newton_minimize(&ftmp, 20.0, &cfg3);
        ftmp.set_interior_values(&f.interior_values());
        r
    }) {
        if let Err(_) = r {}
    }
    // manual loop with 40 budget, print trace rows
    let r = newton_minimize(&f, 20.0, &SolverConfig { max_newton_iters: 60, ..cfg.clone() });
    match r {
        Ok(rr) => {
            for row in &rr.trace { println!("it {:2} E {:.12e} g {:.3e} a {:.3e} lin {}", row.iter, row.energy, row.grad_inf_norm, row.alpha, row.linear_iters); }
        }
        Err(e) => println!("60-budget ERR {e:?}"),
    }
}
