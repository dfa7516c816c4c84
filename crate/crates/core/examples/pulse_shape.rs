//! Prints the traveling pulse predicted for the default coefficients.

use chemopulse::analysis::wave_solution;
use chemopulse::model::ModelParams;

fn main() {
    let p = ModelParams::default();
    let w = wave_solution(&p).expect("default coefficients admit a pulse");
    let r = w.rates();
    println!("speed        {:.12}", w.sigma);
    println!("back rate    {:.6}", r.lambda_minus);
    println!("front rate   {:.6}", r.lambda_plus);
    println!("peak density {:.6}", r.rho0);
    for z in [-4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0] {
        println!("rho({z:+.1}) = {:.6e}", r.density(z));
    }
}
