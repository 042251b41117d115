mod common;

use biascal::surrogate::SurrogateModel;
use biascal::transfercal::{strategy_layers, transfer_learn, CalibratedModel, LossMode, Strategy, TLConfig};

const STRATEGIES: [Strategy; 3] = [Strategy::ForwardTail, Strategy::AeCoresThenForwardTail, Strategy::DecoderInnermost];

fn all_layers(m: &SurrogateModel) -> Vec<(String, &biascal::diffcore::ParameterSet<f64>)> {
    m.all_sets().flat_map(|s| s.layer_names().map(move |l| (l.to_string(), s))).collect()
}

#[test]
fn zero_iterations_reproduce_initial_predictions() {
    let f = common::fixture();
    for strategy in STRATEGIES {
        let cal = transfer_learn(&f.model, &f.campaign.exp_train, &TLConfig { iterations: 0, strategy, ..Default::default() }).unwrap();
        let xs = &f.campaign.exp_validation.inputs;
        let (a, b) = (cal.predict_batch(xs).unwrap(), f.model.predict_batch(xs).unwrap());
        assert!(a.scalars.iter().flatten().zip(b.scalars.iter().flatten()).all(|(p, q)| p.to_bits() == q.to_bits()));
        assert!(a.images.iter().zip(&b.images).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}

#[test]
fn only_strategy_layers_change() {
    let f = common::fixture();
    for strategy in STRATEGIES {
        let cfg = TLConfig { strategy, learning_rate: 1e-3, iterations: 20, ..Default::default() };
        let cal = transfer_learn(&f.model, &f.campaign.exp_train, &cfg).unwrap();
        let retrained: Vec<String> = strategy_layers(&f.model, strategy).concat();
        assert_eq!(cal.retrained, retrained);
        let after = all_layers(&cal.model);
        for (name, set) in all_layers(&f.model) {
            let new_set = after.iter().find(|(n, _)| *n == name).unwrap().1;
            let same = set.layer_bits_equal(new_set, &name);
            if retrained.contains(&name) {
                assert!(!same, "{strategy:?}: {name} was meant to change");
            } else {
                assert!(same, "{strategy:?}: frozen layer {name} changed");
            }
        }
    }
}

#[test]
fn training_loss_decreases() {
    let f = common::fixture();
    for mode in [LossMode::Chi2, LossMode::L2] {
        let cfg = TLConfig { loss_mode: mode, learning_rate: 1e-3, ..Default::default() };
        let cal = transfer_learn(&f.model, &f.campaign.exp_train, &cfg).unwrap();
        let t = &cal.traces[0];
        assert!(t.last().unwrap() < t.first().unwrap(), "{mode:?}: {:?} -> {:?}", t.first(), t.last());
    }
}

#[test]
fn same_seed_same_model() {
    let f = common::fixture();
    let cfg = TLConfig { seed: 5, ..Default::default() };
    let a = transfer_learn(&f.model, &f.campaign.exp_train, &cfg).unwrap();
    let b = transfer_learn(&f.model, &f.campaign.exp_train, &cfg).unwrap();
    assert_eq!(a.model.content_hash(), b.model.content_hash());
}

#[test]
fn save_load_against_base() {
    let f = common::fixture();
    let cal = transfer_learn(&f.model, &f.campaign.exp_train, &TLConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    cal.save(dir.path()).unwrap();
    let back = CalibratedModel::load(dir.path(), &f.model).unwrap();
    assert_eq!(back.model.content_hash(), cal.model.content_hash());

    let mut other = f.model.clone();
    other.forward.layers_mut()[0].bias[0] += 1.0;
    assert!(CalibratedModel::load(dir.path(), &other).is_err());
}

#[test]
fn invalid_configs_rejected() {
    let f = common::fixture();
    let bad = [
        TLConfig { learning_rate: 0.0, ..Default::default() },
        TLConfig { l2: -1.0, ..Default::default() },
        TLConfig { gamma_sca: Some(-1.0), ..Default::default() },
    ];
    for cfg in bad {
        assert!(transfer_learn(&f.model, &f.campaign.exp_train, &cfg).unwrap_err().is_validation());
    }
    let empty = f.campaign.exp_train.subset(&[]);
    assert!(transfer_learn(&f.model, &empty, &TLConfig::default()).is_err());
}
