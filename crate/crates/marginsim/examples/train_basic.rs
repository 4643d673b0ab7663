//! End-to-end single-model run: synthesize a fine-grained four-class set,
//! preprocess, build neighborhoods, train, and compare the soft-voting
//! classifier against the plain Euclidean majority vote.

use marginsim::classifier::{euclidean_knn_baseline, predict_all, top_n_accuracy};
use marginsim::dataset::{apply_preprocessing, fit_pca, PcaConfig};
use marginsim::neighborhood::{build_index, symmetrize};
use marginsim::synth::{fine_grained_four_class, FineGrainedConfig};
use marginsim::trainer::{train, TrainConfig};
use marginsim::Result;

fn main() -> Result<()> {
    let synth = FineGrainedConfig {
        dim: 50,
        train_per_class: 120,
        test_per_class: 60,
        seed: 1,
        ..FineGrainedConfig::default()
    };
    let (raw_train, raw_test) = fine_grained_four_class(&synth)?;
    println!(
        "data: {} train / {} test samples, {} dims, {} classes",
        raw_train.len(),
        raw_test.len(),
        raw_train.dim(),
        raw_train.n_classes()
    );

    // One transform fitted on the training split serves both splits.
    let pca = fit_pca(&raw_train, 40, &PcaConfig::default())?;
    let (train_set, _) = apply_preprocessing(&raw_train, &pca)?;
    let (test_set, _) = apply_preprocessing(&raw_test, &pca)?;

    let index = build_index(&train_set, 10)?;
    let pairs = symmetrize(&index);
    println!(
        "neighborhoods: k={}, {} of {} samples usable for training",
        index.k(),
        pairs.usable_indices().len(),
        train_set.len()
    );

    let config = TrainConfig {
        seed: 1,
        ..TrainConfig::default()
    };
    let (model, trace) = train(&train_set, &pairs, &config)?;

    println!("\nepoch  objective    updates  skips");
    for e in &trace.epochs {
        println!(
            "{:>5}  {:>10.4}  {:>7}  {:>5}",
            e.epoch, e.objective, e.updates, e.skips
        );
    }
    println!(
        "stopped after {} epochs ({})",
        trace.epochs.len(),
        if trace.converged {
            "converged"
        } else {
            "epoch limit"
        }
    );

    let truth = test_set.original_labels();
    let learned = predict_all(&test_set, &train_set, &model, 10);
    let baseline = euclidean_knn_baseline(&test_set, &train_set, 10);
    println!("\n             top-1   top-3");
    println!(
        "learned     {:>6.4}  {:>6.4}",
        top_n_accuracy(&learned, &truth, 1),
        top_n_accuracy(&learned, &truth, 3)
    );
    println!(
        "euclidean   {:>6.4}  {:>6.4}",
        top_n_accuracy(&baseline, &truth, 1),
        top_n_accuracy(&baseline, &truth, 3)
    );
    Ok(())
}
