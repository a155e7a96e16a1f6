use ipop_core::config::{parse_config, RunConfig, Section, Value};
use ipop_core::energy::summarize;
use ipop_core::presets::{preset_text, PRESET_NAMES};
use proptest::prelude::*;

#[test]
fn every_preset_builds_its_modules() {
    for name in PRESET_NAMES {
        let cfg = RunConfig::from_preset(name).unwrap_or_else(|e| panic!("{name}: {e}"));
        if cfg.has_section(Section::Device) {
            cfg.device_model().unwrap().validate().unwrap();
        }
        if cfg.has_section(Section::Resonator) {
            cfg.resonator().unwrap();
            cfg.excitation().unwrap();
            cfg.resonator_timing().unwrap();
        }
        if cfg.has_section(Section::Energy) {
            summarize(&cfg.operating_point().unwrap()).unwrap();
        }
        if cfg.has_section(Section::Circuit) {
            cfg.circuit_params().unwrap().validate().unwrap();
            let duration = cfg.circuit_duration().unwrap();
            cfg.drive(duration).unwrap().validate().unwrap();
        }
        if cfg.has_section(Section::Sweep) {
            cfg.sweep_spec().unwrap().validate().unwrap();
        }
    }
}

#[test]
fn preset_reference_expands_to_the_shipped_bundle() {
    let cfg = parse_config("preset = cc_grounded\n").unwrap();
    assert_eq!(cfg, RunConfig::from_preset("cc_grounded").unwrap());
}

#[test]
fn circuit_preset_holds_the_reference_values() {
    let cfg = RunConfig::from_preset("circuit_sec6").unwrap();
    let p = cfg.circuit_params().unwrap();
    assert_eq!(p.c_res, 2e-6);
    assert_eq!(p.r_load, 2e7);
    assert_eq!(p.l_fly, 4e-3);
    assert_eq!(p.v_initial, 5.0);
    let d = cfg.drive(cfg.circuit_duration().unwrap()).unwrap();
    assert_eq!(d.c_range(), (47e-12, 208e-12));
    assert_eq!(d.mech_frequency(), 300.0);
}

#[test]
fn zero_c_min_is_rejected_with_its_line() {
    let err = parse_config("[drive]\nc_max = 2e-10\nc_min = 0\nfrequency = 300\n").unwrap_err();
    assert_eq!(err.0.len(), 1);
    assert_eq!(err.0[0].line, 3);
}

#[test]
fn unknown_preset_and_section_are_rejected() {
    assert!(RunConfig::from_preset("nope").is_err());
    assert!(preset_text("nope").is_none());
    assert!(parse_config("[wiring]\nx = 1\n").is_err());
}

#[test]
fn every_preset_survives_a_round_trip() {
    for name in PRESET_NAMES {
        let cfg = RunConfig::from_preset(name).unwrap();
        let text = cfg.serialize();
        let back = parse_config(&text).unwrap_or_else(|e| panic!("{name}: {e}\n{text}"));
        assert_eq!(back, cfg, "{name}");
        let again = back.serialize();
        assert_eq!(parse_config(&again).unwrap().serialize(), again, "{name}");
    }
}

proptest! {
    #[test]
    fn overrides_survive_a_round_trip(
        preset in prop::sample::select(vec!["circuit_sec6", "lowfreq_410"]),
        c_store in 0.5e-9f64..10e-9,
        pulse_width in 0.5e-6f64..20e-6,
        r_load in 1e6f64..1e9,
        enabled in any::<bool>(),
    ) {
        let mut cfg = RunConfig::from_preset(preset).unwrap();
        cfg.set(Section::Circuit, "c_store", &c_store.to_string()).unwrap();
        cfg.set(Section::Circuit, "pulse_width", &pulse_width.to_string()).unwrap();
        cfg.set(Section::Circuit, "r_load", &r_load.to_string()).unwrap();
        cfg.set(Section::Circuit, "flyback_enabled", &enabled.to_string()).unwrap();
        let text = cfg.serialize();
        let back = parse_config(&text).unwrap();
        prop_assert_eq!(back.get(Section::Circuit, "c_store"), Some(&Value::Number(c_store)));
        prop_assert_eq!(back.get(Section::Circuit, "flyback_enabled"), Some(&Value::Bool(enabled)));
        let again = back.serialize();
        prop_assert_eq!(parse_config(&again).unwrap(), back);
        prop_assert!(text.ends_with(&again));
    }
}
