use lipext_core::oracle::{brute_force_minimal_extension, OracleConfig, OracleObjective};
use lipext_core::testing::random_instance;

fn main() {
    let shapes = [(1usize, 1usize), (2, 1), (3, 1), (4, 1), (1, 2), (2, 2), (1, 3), (3, 1), (1, 4), (2, 2)];
    let mut worst = f64::NEG_INFINITY;
    let mut nbad = 0;
    for i in 0..50u64 {
        let (n_int, dim) = shapes[(i as usize) % shapes.len()];
        let (g, bd) = random_instance(2000 + i, n_int, 2 + (i as usize % 2), dim);
        let lex = brute_force_minimal_extension(&g, &bd, &OracleConfig { objective: OracleObjective::Lex, ..OracleConfig::default() }).unwrap();
        let llex = brute_force_minimal_extension(&g, &bd, &OracleConfig { objective: OracleObjective::Llex, ..OracleConfig::default() }).unwrap();
        let gap = llex.function.sup_distance(&lex.function);
        let allow = 2.0 * llex.final_spacing.max(lex.final_spacing);
        if gap > allow {
            nbad += 1;
            println!("inst {i:2} (n_int {n_int} dim {dim}): gap {gap:.4e} allow {allow:.3e} ratio {:.1}", gap / allow);
        }
        worst = worst.max(gap - allow);
    }
    println!("bad {nbad}/50, worst excess {worst:.3e}");
}
