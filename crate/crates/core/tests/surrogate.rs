mod common;

use biascal::surrogate::{SurrogateModel, DECODER_INNERMOST};
use biascal::toydata::N_SCALARS;

#[test]
fn tiny_surrogate_learns_something() {
    let f = common::fixture();
    let recon = f.model.evaluate_reconstruction_r2(&f.campaign.sims).unwrap();
    assert!(recon.pixels > 0.8, "pixel reconstruction R² {}", recon.pixels);
    let fwd = f.model.evaluate_r2(&f.campaign.sims).unwrap();
    assert!(fwd.scalars.iter().filter(|r| **r > 0.5).count() >= 8, "{:?}", fwd.scalars);
    assert!(f.report.autoencoder_trace.last().unwrap() < f.report.autoencoder_trace.first().unwrap());
}

#[test]
fn predictions_are_physical() {
    let f = common::fixture();
    let p = f.model.predict_batch(&f.campaign.exp_validation.inputs).unwrap();
    assert_eq!(p.len(), f.campaign.exp_validation.len());
    assert!(p.all_finite());
    assert!(p.images.iter().all(|v| *v >= 0.0));
    assert_eq!(p.scalars[0].len(), N_SCALARS);
    assert!(f.model.predict_batch(&[]).unwrap().is_empty());
}

#[test]
fn save_load_is_bit_exact() {
    let f = common::fixture();
    let dir = tempfile::tempdir().unwrap();
    f.model.save(dir.path()).unwrap();
    let back = SurrogateModel::load(dir.path()).unwrap();
    assert_eq!(back.content_hash(), f.model.content_hash());
    let xs = &f.campaign.exp_train.inputs;
    assert_eq!(back.predict_batch(xs).unwrap(), f.model.predict_batch(xs).unwrap());
}

#[test]
fn architecture_names_the_innermost_decoder_layer() {
    let f = common::fixture();
    assert!(f.model.decoder.iter().any(|s| s.layer(DECODER_INNERMOST).is_some()));
}

#[test]
fn normalizing_is_idempotent() {
    let f = common::fixture();
    let normed = f.model.normalized(&f.campaign.exp_train).unwrap();
    let again = f.model.normalized(&normed).unwrap();
    assert_eq!(again.scalars, normed.scalars);
}

fn train_with(arch_edit: impl Fn(&mut biascal::surrogate::Architecture), cfg_edit: impl Fn(&mut biascal::surrogate::SurrogateTrainConfig)) -> biascal::surrogate::TrainingReport {
    let f = common::fixture();
    let mut arch = f.model.arch.clone();
    arch_edit(&mut arch);
    let mut cfg = common::train_config();
    cfg_edit(&mut cfg);
    biascal::surrogate::train_surrogate(&f.campaign.sims, &arch, &cfg).unwrap().1
}

#[test]
fn zero_cycle_weights_drop_cycle_terms() {
    let rep = train_with(|_| {}, |c| {
        c.cycle_x_weight = 0.0;
        c.cycle_z_weight = 0.0;
        c.autoencoder.iterations = 20;
        c.forward_inverse.iterations = 20;
    });
    assert!(rep.decomposition.cycle_x.is_none() && rep.decomposition.cycle_z.is_none());
    assert!(common::fixture().report.decomposition.cycle_x.is_some());
}

#[test]
fn one_latent_is_a_worse_bottleneck() {
    let narrow = train_with(|a| a.latent = 1, |_| {});
    let wide = &common::fixture().report;
    let px = |r: &biascal::surrogate::TrainingReport| r.heldout_reconstruction.as_ref().unwrap().pixels;
    assert!(px(&narrow) < px(wide), "{} vs {}", px(&narrow), px(wide));
}

#[test]
fn linear_autoencoder_without_bottleneck_reconstructs() {
    let pixels = common::SIDE * common::SIDE;
    let rep = train_with(
        |a| {
            a.latent = pixels + N_SCALARS;
            a.hidden_activation = biascal::diffcore::Activation::Linear;
        },
        |c| {
            c.autoencoder.iterations = 5000;
            c.autoencoder.learning_rate = 3e-3;
            c.autoencoder.schedule = biascal::diffcore::Schedule::Cosine { final_fraction: 0.01 };
            c.latent_prior_weight = 0.0;
            c.forward_inverse.iterations = 10;
        },
    );
    let r = rep.heldout_reconstruction.unwrap();
    assert!(r.pixels >= 0.999 && r.min_scalar() >= 0.999, "{r:?}");
}
