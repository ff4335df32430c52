use cvhom::field::{DefectField, MaterialModel};
use cvhom::solver::{solve_corrector, ElementCoefficients, SolverOptions, StiffnessOperator};

// brute-force element stiffness by 2x2 Gauss quadrature on the unit square
fn brute_element(a: [f64; 3]) -> [[f64; 4]; 4] {
    let gp = [0.5 - 0.5 / 3.0f64.sqrt(), 0.5 + 0.5 / 3.0f64.sqrt()];
    let grad = |i: usize, x: f64, y: f64| -> [f64; 2] {
        match i {
            0 => [-(1.0 - y), -(1.0 - x)],
            1 => [1.0 - y, -x],
            2 => [y, x],
            _ => [-y, 1.0 - x],
        }
    };
    let mut k = [[0.0; 4]; 4];
    for &x in &gp {
        for &y in &gp {
            for i in 0..4 {
                for j in 0..4 {
                    let gi = grad(i, x, y);
                    let gj = grad(j, x, y);
                    let agj = [a[0] * gj[0] + a[1] * gj[1], a[1] * gj[0] + a[2] * gj[1]];
                    k[i][j] += 0.25 * (gi[0] * agj[0] + gi[1] * agj[1]);
                }
            }
        }
    }
    k
}

#[test]
fn probe_stiffness_against_brute_force() {
    let model = MaterialModel::checkerboard(2, 3.0, 23.0, 0.5).unwrap();
    let field = DefectField::sample(&model, 2, 3).unwrap();
    let coef = ElementCoefficients::from_realization(&model, &field, 2).unwrap();
    let n = 4usize;
    let count = n * n;
    let op = StiffnessOperator::new(&coef);

    // dense K via op.apply on unit vectors
    let mut k_op = vec![vec![0.0; count]; count];
    for c in 0..count {
        let mut e = vec![0.0; count];
        e[c] = 1.0;
        let mut y = vec![0.0; count];
        op.apply(&e, &mut y);
        for r in 0..count {
            k_op[r][c] = y[r];
        }
    }

    // dense K by brute-force assembly
    let mut k_bf = vec![vec![0.0; count]; count];
    for j in 0..n {
        let jp = (j + 1) % n;
        for i in 0..n {
            let ip = (i + 1) % n;
            let e = i + n * j;
            let ke = brute_element(coef.value(e));
            let loc = [e, ip + n * j, ip + n * jp, i + n * jp];
            for r in 0..4 {
                for c in 0..4 {
                    k_bf[loc[r]][loc[c]] += ke[r][c];
                }
            }
        }
    }

    let mut worst = 0.0f64;
    for r in 0..count {
        for c in 0..count {
            worst = worst.max((k_op[r][c] - k_bf[r][c]).abs());
        }
    }
    println!("max |K_op - K_bf| = {worst:.3e}");
    assert!(worst < 1e-12, "stiffness mismatch {worst}");

    // residual of the solve
    let w = solve_corrector(&coef, 0, &SolverOptions::with_tol(1e-12)).unwrap();
    let b = op.rhs(0);
    let mut kw = vec![0.0; count];
    op.apply(&w.values, &mut kw);
    let rnorm: f64 = b.iter().zip(&kw).map(|(bi, ki)| (bi - ki) * (bi - ki)).sum::<f64>().sqrt();
    let bnorm: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    println!("true residual = {:.3e} (reported {:.3e})", rnorm / bnorm, w.residual);
    assert!(rnorm / bnorm < 1e-10);
}
