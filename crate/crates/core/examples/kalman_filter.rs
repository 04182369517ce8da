//! Filters and smooths a local-level model with missing observations.
//!
//! cargo run --example kalman_filter

use nalgebra::{DMatrix, DVector};

use densecast::statespace::{kalman_filter, rts_smooth, StateSpaceModel};

fn main() -> densecast::Result<()> {
    // y_t = a_t + e_t, a_t = a_t-1 + u_t
    let model = StateSpaceModel::new(
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 0.5),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 0.1),
        DVector::from_element(1, 0.0),
        DMatrix::from_element(1, 1, 10.0),
    )?;
    let ys = [Some(1.2), Some(0.9), None, None, Some(1.8), Some(2.1), None, Some(2.4)];
    let obs: Vec<Vec<Option<f64>>> = ys.iter().map(|y| vec![*y]).collect();

    let filt = kalman_filter(&model, &obs)?;
    let smooth = rts_smooth(&model, &filt)?;
    println!("log-likelihood {:.4}", filt.loglik);
    println!("{:>2} {:>6} {:>9} {:>9} {:>9}", "t", "y", "filtered", "var", "smoothed");
    for (t, y) in ys.iter().enumerate() {
        println!(
            "{t:>2} {:>6} {:>9.4} {:>9.4} {:>9.4}",
            y.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into()),
            filt.filtered_means[t][0],
            filt.filtered_covs[t][(0, 0)],
            smooth.means[t][0],
        );
    }
    Ok(())
}
