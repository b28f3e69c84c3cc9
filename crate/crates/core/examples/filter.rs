//! The knockoff filter on a hand-made statistic tensor: p-values across
//! imputations, ordering, and the SeqStep cutoff with and without the +1.

use knockoff_mem::filter::{pvalues, select, seqstep, StatTensor};

fn main() -> knockoff_mem::error::Result<()> {
    // Three imputations, one outcome, twelve features. The first eight are
    // strong in every imputation; the rest are noise.
    let (k, p) = (3, 12);
    let mut z = Vec::new();
    let mut zt = Vec::new();
    for copy in 0..k {
        for j in 0..p {
            let wobble = 0.001 * (copy * p + j) as f64;
            if j < 8 {
                z.push(2.0 - 0.1 * j as f64 + wobble);
                zt.push(0.1);
            } else {
                // Noise loses to its knockoff in most imputations.
                z.push(0.1 + wobble);
                zt.push(if (j + copy) % 3 == 0 { 0.01 } else { 0.3 });
            }
        }
    }
    let tensor = StatTensor::new(k, 1, p, z, zt)?;
    println!("p-values: {:.2?}", pvalues(&tensor));

    let report = select(&tensor, 0.2, None)?;
    println!("order: {:?}", report.order);
    println!("SeqStep  (c = 0): k_hat = {}, selected {:?}", report.k_hat_0, report.selected_0);
    println!("SeqStep+ (c = 1): k_hat = {}, selected {:?}", report.k_hat_1, report.selected_1);

    let ordered: Vec<f64> = report.order.iter().map(|&j| report.p_values[j]).collect();
    let (_, ratios) = seqstep(&ordered, 0.2, 1)?;
    println!("estimated FDP by prefix: {:.2?}", ratios);
    Ok(())
}
