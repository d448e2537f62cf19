// scratch: bc predictor scaling probe
use adia::combiner::{predict_first_order_bc};
use adia::hamiltonians::HamiltonianFamily;
use adia::propagation::{evolve, level_amplitude, IntegratorOptions};
use adia::{paths, spectral};
fn main() {
    let fam = HamiltonianFamily::search(5).unwrap();
    let path = paths::smoothstep_path();
    let tr = spectral::track(&fam, &path, 128).unwrap();
    let start = tr.start_frame().ground();
    let opts = IntegratorOptions { base_steps: 512, tolerance: 1e-11, ..Default::default() };
    for t in [100.0, 200.0, 400.0, 800.0, 1600.0] {
        let res = evolve(&fam, &path, t, &start, &opts).unwrap();
        let m = level_amplitude(&res.final_state, &tr, 1);
        let p = predict_first_order_bc(&tr, t, 1, 1).unwrap();
        println!("T={t:6}: |meas|={:.6e} |pred|={:.6e} |diff|={:.6e}  measT2={:.4} predT2={:.4} diffT3={:.3}",
            m.norm(), p.norm(), (m-p).norm(), m.norm()*t*t, p.norm()*t*t, (m-p).norm()*t*t*t);
        // total error across all levels
        let mut tot = 0.0f64;
        for n in 1..5 { tot += level_amplitude(&res.final_state, &tr, n).norm_sqr(); }
        println!("          total diabatic amp = {:.6e}", tot.sqrt());
    }
}
