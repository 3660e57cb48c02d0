use proptest::prelude::*;
use ralm::channel::{ChannelCondition, ConditionModel};
use ralm::dataio::{self, GridDims, MeasurementSet, PositionSource, ScenarioConfig};
use ralm::estimators::Method;
use ralm::eval::ResidualSpans;
use ralm::nn::{ModelState, ResNetConfig};
use ralm::optim::{train, TrainConfig};
use ralm::pipeline;

fn small(seed: u64, samples: usize) -> ScenarioConfig {
    ScenarioConfig {
        seed,
        samples,
        grid: GridDims { rows: 12, cols: 24 },
        ..Default::default()
    }
}

#[test]
fn files_carry_a_run_from_scenario_to_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let sc = small(3, 24);
    let set = pipeline::simulate(&sc).unwrap();
    let mpath = dir.path().join("m.ralm");
    set.write(&mpath).unwrap();
    let set = MeasurementSet::read(&mpath).unwrap();
    assert_eq!(set.scenario, sc);

    let (data, meta) = pipeline::build_tensors(&set).unwrap();
    let tpath = dir.path().join("t.ralm");
    dataio::write_tensors(&data, &meta, &tpath).unwrap();
    let (data2, meta2) = dataio::read_tensors(&tpath).unwrap();
    assert_eq!(data2, data);
    assert_eq!(meta2, meta);
    assert_eq!(meta2.scenario_digest, sc.digest());

    let mut rc = ResNetConfig::for_input(data.channels, data.height, data.width);
    rc.stem_filters = 4;
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 8,
        ..Default::default()
    };
    let (report, model) = train(ModelState::new(rc.clone(), 1).unwrap(), &cfg, &data).unwrap();
    let cpath = dir.path().join("ck.ralm");
    dataio::write_checkpoint(&model, Some(&cfg), Some(&report), &cpath).unwrap();
    let back = dataio::read_checkpoint_for(&cpath, &model.config).unwrap();
    let (x, _) = data.batch(&[0, 1, 2]);
    let a = model.predict(&x).unwrap();
    let b = back.model.predict(&x).unwrap();
    for (p, q) in a.data.iter().zip(&b.data) {
        assert!((p - q).abs() < 1e-4, "{p} vs {q}");
    }
    assert_eq!(back.report.unwrap().best_epoch, report.best_epoch);

    rc.input_channels += 2;
    assert!(dataio::read_checkpoint_for(&cpath, &rc).is_err());
}

#[test]
fn boarding_scenario_stays_in_cabin_and_locates() {
    let sc = ScenarioConfig {
        positions: PositionSource::Boarding,
        samples: 60,
        conditions: ConditionModel::pinned(ChannelCondition::Los),
        ..small(5, 0)
    };
    let set = pipeline::simulate(&sc).unwrap();
    assert_eq!(set.states.len(), 60);
    assert!(set.truths().iter().all(|p| sc.cabin.contains(*p)));
    let est = pipeline::locate(&set, Method::Centroid).unwrap();
    assert!(est.iter().all(|e| e.is_some_and(|p| sc.cabin.contains(p))));
    let h = pipeline::residuals(&set, 8, &ResidualSpans::default()).unwrap();
    assert_eq!(h.range.counts.iter().sum::<u64>(), 60 * sc.anchors.len() as u64);
}

#[test]
fn scenario_toml_round_trips() {
    let sc = small(11, 7);
    let back = ScenarioConfig::from_toml(&sc.to_toml().unwrap()).unwrap();
    assert_eq!(back, sc);
    assert_eq!(back.digest(), sc.digest());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn measurement_files_reload_exactly(seed in any::<u64>(), n in 1usize..12) {
        let set = pipeline::simulate(&small(seed, n)).unwrap();
        let bytes = set.to_container().unwrap().encode().unwrap();
        let back = MeasurementSet::from_container(&dataio::Container::decode(&bytes).unwrap()).unwrap();
        prop_assert_eq!(back.to_container().unwrap().encode().unwrap(), bytes);
    }

    #[test]
    fn seed_alone_decides_the_dataset(seed in any::<u64>()) {
        let a = pipeline::simulate(&small(seed, 5)).unwrap();
        let b = pipeline::simulate(&small(seed, 5)).unwrap();
        prop_assert_eq!(a.to_container().unwrap().encode().unwrap(), b.to_container().unwrap().encode().unwrap());
        let c = pipeline::simulate(&small(seed.wrapping_add(1), 5)).unwrap();
        prop_assert_ne!(a.truths(), c.truths());
    }
}
