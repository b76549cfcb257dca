use nalgebra::{DMatrix, DVector};
use rampart_core::sdp::{solve_program, SolverOutcome, SolveOptions};
use rampart_core::lmi::{assemble_lmi, AssemblyOptions, SynthesisProblem, stability_matrix, performance_matrix};
use rampart_core::{assemble_system, Decomposition, FundamentalDiagram, HighwayTopology, SensorLayout};

fn main() {
    env_logger::init();
    let fd = FundamentalDiagram::new(28.8889, 6.6667, 0.0249, 0.1333).unwrap();
    let topo = HighwayTopology::new(3, vec![2], vec![3], 200.0, 1.0, vec![], &fd).unwrap();
    let layout = SensorLayout { sections: vec![1, 3], onramps: vec![2], offramps: vec![] };
    let model = assemble_system(&topo, &fd, &layout, Decomposition::Contraction(0.45)).unwrap();
    let problem = SynthesisProblem::from_model(&model, 0.1, 0.5, 0.05, 1e4);
    let opts = AssemblyOptions::default();
    let (program, vl) = assemble_lmi(&problem, &opts).unwrap();
    println!("num_vars={} blocks={}", program.num_vars, program.blocks.len());
    for b in &program.blocks { println!("  block {} side {}", b.label, b.side); }
    println!("var_scale P = {:e}, mu0 = {:e}", program.var_scale[0], program.var_scale[vl.mu0_var()]);
    match solve_program(&program, &SolveOptions::default()).unwrap() {
        SolverOutcome::Infeasible { min_shift } => println!("INFEASIBLE shift={min_shift:e}"),
        SolverOutcome::Feasible(sol) => {
            println!("feasible obj={:e} gap={:e} iters={}", sol.objective, sol.gap_bound, sol.newton_iters);
            println!("program min_eig at theta = {:e}", program.min_eigenvalue(&sol.theta));
            let (p, y, eps, mu0, mu2) = vl.unpack(&sol.theta);
            println!("eps={eps:e} mu0={mu0:e} mu2={mu2:e}");
            println!("P diag head: {:?}", &p.diagonal().as_slice()[..3]);
            let stab = stability_matrix(&problem, &p, &y, eps, mu0);
            let perf = performance_matrix(&problem, &p, mu2);
            let lmax = |m: &DMatrix<f64>| m.clone().symmetric_eigen().eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            println!("residual stab={:e} perf={:e}", lmax(&stab), lmax(&perf));
            // compare against negated block evals
            let s0 = program.blocks[0].eval(&sol.theta);
            let s1 = program.blocks[1].eval(&sol.theta);
            let d0 = (&s0 + &stab).amax();
            let d1 = (&s1 + &perf).amax();
            println!("assembly-vs-dense diff stab={d0:e} perf={d1:e} (should be ~margin)");
            let _ = DVector::<f64>::zeros(1);
        }
    }
}
