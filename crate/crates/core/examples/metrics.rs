// Classification and regression metrics on toy predictions.

use protomap::harness::{balanced_accuracy, f1_weighted, mean_std, rmse_r2, roc_auc, AucMode};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let probs = vec![vec![0.9, 0.1], vec![0.6, 0.4], vec![0.65, 0.35], vec![0.2, 0.8]];
    let labels = [0, 0, 1, 1];
    println!("binary AUC {}", roc_auc(&probs, &labels, AucMode::Binary)?);

    let pred = [0, 1, 1, 1, 2];
    let truth = [0, 0, 1, 1, 2];
    println!("balanced accuracy {:.3}", balanced_accuracy(&pred, &truth, 3)?);
    println!("weighted F1 {:.3}", f1_weighted(&pred, &truth, 3)?);

    let (rmse, r2) = rmse_r2(&[27.5, 24.0, 21.0], &[28.0, 25.0, 20.0])?;
    println!("rmse {rmse:.3}, R² {r2:.3}");

    let (mean, std) = mean_std(&[0.91, 0.95, 0.93]).ok_or("empty")?;
    println!("{mean:.3} ± {std:.3}");

    assert!(roc_auc(&probs, &[1, 1, 1, 1], AucMode::Binary).is_err());
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
