//! Explicit embedded Runge–Kutta stepping (Dormand–Prince 8(5,3)).
//!
//! The error estimate combines the 5th- and 3rd-order embedded solutions as
//! in Hairer's DOP853, which keeps step-size control reliable at tight
//! tolerances.

use crate::error::Result;

// Stage nodes. The flows are autonomous, so only the tableau checks use them.
#[cfg(test)]
const C: [f64; 12] = [0.0, 0.05260015195876773, 0.0789002279381516, 0.1183503419072274, 0.2816496580927726, 0.3333333333333333, 0.25, 0.3076923076923077, 0.6512820512820513, 0.6, 0.8571428571428571, 1.0];
const A: [[f64; 11]; 12] = [
    [0.0; 11],
    [0.05260015195876773, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0197250569845379, 0.0591751709536137, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.02958758547680685, 0.0, 0.08876275643042054, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2413651341592667, 0.0, -0.8845494793282861, 0.924834003261792, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.037037037037037035, 0.0, 0.0, 0.17082860872947386, 0.12546768756682242, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.037109375, 0.0, 0.0, 0.17025221101954405, 0.06021653898045596, -0.017578125, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.03709200011850479, 0.0, 0.0, 0.17038392571223998, 0.10726203044637328, -0.015319437748624402, 0.008273789163814023, 0.0, 0.0, 0.0, 0.0],
    [0.6241109587160757, 0.0, 0.0, -3.3608926294469414, -0.868219346841726, 27.59209969944671, 20.154067550477894, -43.48988418106996, 0.0, 0.0, 0.0],
    [0.47766253643826434, 0.0, 0.0, -2.4881146199716677, -0.590290826836843, 21.230051448181193, 15.279233632882423, -33.28821096898486, -0.020331201708508627, 0.0, 0.0],
    [-0.9371424300859873, 0.0, 0.0, 5.186372428844064, 1.0914373489967295, -8.149787010746927, -18.52006565999696, 22.739487099350505, 2.4936055526796523, -3.0467644718982196, 0.0],
    [2.273310147516538, 0.0, 0.0, -10.53449546673725, -2.0008720582248625, -17.9589318631188, 27.94888452941996, -2.8589982771350235, -8.87285693353063, 12.360567175794303, 0.6433927460157636],
];
const B: [f64; 12] = [0.054293734116568765, 0.0, 0.0, 0.0, 0.0, 4.450312892752409, 1.8915178993145003, -5.801203960010585, 0.3111643669578199, -0.1521609496625161, 0.20136540080403034, 0.04471061572777259];
const E5: [f64; 12] = [0.01312004499419488, 0.0, 0.0, 0.0, 0.0, -1.2251564463762044, -0.4957589496572502, 1.6643771824549864, -0.35032884874997366, 0.3341791187130175, 0.08192320648511571, -0.022355307863886294];
const BHH: [f64; 3] = [0.2440944881889764, 0.7338466882816118, 0.022058823529411766];

/// Fixed-size state for autonomous systems.
pub(crate) type State<const N: usize> = [f64; N];

/// One DOP853 step of length `h`. Returns the 8th-order solution and the
/// scaled error norm (accept when `<= 1`) for tolerance `tol` (used as both
/// absolute and relative tolerance).
pub(crate) fn dop853_step<const N: usize, F>(f: &F, y: &State<N>, h: f64, tol: f64) -> Result<(State<N>, f64)>
where
    F: Fn(&State<N>) -> Result<State<N>>,
{
    let mut k = [[0.0; N]; 12];
    k[0] = f(y)?;
    for s in 1..12 {
        let mut ys = *y;
        for j in 0..s {
            let a = A[s][j];
            if a != 0.0 {
                for i in 0..N {
                    ys[i] += h * a * k[j][i];
                }
            }
        }
        k[s] = f(&ys)?;
    }
    let mut inc = [0.0; N];
    let mut e5 = [0.0; N];
    for s in 0..12 {
        for i in 0..N {
            inc[i] += B[s] * k[s][i];
            e5[i] += E5[s] * k[s][i];
        }
    }
    let mut y_new = *y;
    let (mut err5, mut err3) = (0.0, 0.0);
    for i in 0..N {
        y_new[i] += h * inc[i];
        let sc = tol * (1.0 + y[i].abs().max(y_new[i].abs()));
        let e3 = inc[i] - BHH[0] * k[0][i] - BHH[1] * k[8][i] - BHH[2] * k[11][i];
        err5 += (e5[i] / sc).powi(2);
        err3 += (e3 / sc).powi(2);
    }
    let deno = err5 + 0.01 * err3;
    let deno = if deno > 0.0 { deno } else { 1.0 };
    let err = h.abs() * err5 / (deno * N as f64).sqrt();
    Ok((y_new, err))
}

/// Step-size factor for the next attempt after an error norm `err`.
pub(crate) fn step_factor(err: f64) -> f64 {
    if err == 0.0 {
        return 6.0;
    }
    (0.9 * err.powf(-1.0 / 8.0)).clamp(1.0 / 3.0, 6.0)
}
