use mdclock::catalog::{
    bundled, merge_catalog, parse_levels, parse_lines, rate_from_reduced_dipole, reduced_dipole_from_rate,
    CatalogError, CrossSectionTable, LevelSet, LineCatalog, MergePolicy, TransitionLine,
    DEFAULT_WAVELENGTH_TOLERANCE,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};

const LEVELS: &str = "\
id,energy_cm1,two_J,parity,config,source
a,0.0,7,odd,x,exp
b,10000.0,9,even,y,exp
c,20000.0,5,even,z,calc
";

fn levels() -> LevelSet {
    parse_levels(LEVELS).unwrap()
}

fn lines(body: &str) -> Result<Vec<TransitionLine>, CatalogError> {
    let text = format!("upper_id,lower_id,lambda_nm,A_per_s,source,sign\n{body}");
    parse_lines(&text, &levels(), DEFAULT_WAVELENGTH_TOLERANCE)
}

fn bundled_parts() -> (LevelSet, Vec<TransitionLine>, Vec<TransitionLine>) {
    let levels = parse_levels(bundled::LEVELS).unwrap();
    let calc = parse_lines(bundled::LINES_CALCULATED, &levels, DEFAULT_WAVELENGTH_TOLERANCE).unwrap();
    let exp = parse_lines(bundled::LINES_EXPERIMENTAL, &levels, DEFAULT_WAVELENGTH_TOLERANCE).unwrap();
    (levels, calc, exp)
}

#[test]
fn parses_valid_rows() {
    let l = lines("b,a,1000.0,1e6,calc,1\nc,a,500.0,2e5,exp,-1\n").unwrap();
    assert_eq!(l.len(), 2);
    assert_eq!(l[1].sign, -1);
}

#[test]
fn rejects_malformed_rows() {
    assert!(matches!(lines("b,x,1000.0,1e6,calc,1\n"), Err(CatalogError::DanglingReference { .. })));
    assert!(matches!(lines("b,a,1000.0,-1,calc,1\n"), Err(CatalogError::NonPositiveRate { .. })));
    assert!(matches!(lines("a,b,1000.0,1e6,calc,1\n"), Err(CatalogError::NotDownward { .. })));
    assert!(matches!(lines("b,a,1100.0,1e6,calc,1\n"), Err(CatalogError::InconsistentWavelength { .. })));
    assert!(matches!(lines("b,a,abc,1e6,calc,1\n"), Err(CatalogError::Parse { .. })));
    assert!(matches!(
        parse_levels("id,energy_cm1,two_J,parity,config,source\na,0,7,odd,x,exp\na,1,7,odd,x,exp\n"),
        Err(CatalogError::DuplicateLevel(_))
    ));
    assert!(parse_levels("id,energy_cm1,two_J,parity,config,source\na,0,7,neither,x,exp\n").is_err());
    assert!(parse_levels("id,energy_cm1,two_J,parity,config,source\na,-5,7,odd,x,exp\n").is_err());
}

#[test]
fn duplicate_pairs_are_rejected() {
    let l = lines("b,a,1000.0,1e6,calc,1\nb,a,1000.0,2e6,calc,1\n").unwrap();
    assert!(matches!(
        LineCatalog::new(levels(), l, MergePolicy::CalculationFirst),
        Err(CatalogError::DuplicatePair(..))
    ));
}

#[test]
fn cross_section_rejects_bad_tables() {
    assert!(CrossSectionTable::new(vec![6.0, 5.0], vec![1.0, 1.0], 5.0).is_err());
    assert!(CrossSectionTable::new(vec![6.0, 7.0], vec![1.0], 6.0).is_err());
    assert!(CrossSectionTable::new(vec![6.0, 7.0], vec![1.0, -1.0], 6.0).is_err());
}

#[test]
fn restricted_keeps_levels_and_filters_lines() {
    let cat = LineCatalog::bundled(MergePolicy::CalculationFirst).unwrap();
    let red = cat.restricted(|l| l.lambda_nm > 700.0);
    assert_eq!(red.levels().len(), cat.levels().len());
    assert!(red.lines().iter().all(|l| l.lambda_nm > 700.0));
    assert_eq!(
        red.lines().len(),
        cat.lines().iter().filter(|l| l.lambda_nm > 700.0).count()
    );
}

#[test]
fn merge_policies_differ_only_in_precedence() {
    let (levels, calc, exp) = bundled_parts();
    let a = merge_catalog(levels.clone(), calc.clone(), &exp, MergePolicy::CalculationFirst).unwrap();
    let b = merge_catalog(levels, calc, &exp, MergePolicy::Combined).unwrap();
    for line in a.lines() {
        let twin = b
            .lines()
            .iter()
            .find(|l| l.upper_id == line.upper_id && l.lower_id == line.lower_id)
            .expect("every calculation-first line is present under combined");
        assert_eq!(twin.lambda_nm, line.lambda_nm);
        assert_eq!(twin.sign, line.sign);
    }
    assert!(b.lines().len() >= a.lines().len());
}

fn config() -> Config {
    Config {
        cases: 256,
        rng_seed: RngSeed::Fixed(0xca7),
        failure_persistence: None,
        ..Config::default()
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn merge_is_idempotent_on_any_subset(mask in any::<u64>(), combined in any::<bool>()) {
        let (levels, calc, exp) = bundled_parts();
        let policy = if combined { MergePolicy::Combined } else { MergePolicy::CalculationFirst };
        let subset: Vec<TransitionLine> = exp.iter().enumerate().filter(|(k, _)| mask >> (k % 64) & 1 == 1).map(|(_, l)| l.clone()).collect();
        let once = merge_catalog(levels.clone(), calc, &subset, policy).unwrap();
        let twice = merge_catalog(levels, once.lines().to_vec(), &subset, policy).unwrap();
        prop_assert_eq!(once.lines(), twice.lines());
    }

    #[test]
    fn reduced_dipole_round_trip(rate in 1e-3f64..1e9, lambda in 250.0f64..5000.0, two_j in 0u32..20, neg in any::<bool>()) {
        let text = format!(
            "id,energy_cm1,two_J,parity,config,source\nlo,0,3,odd,x,exp\nhi,{},{},even,y,exp\n",
            1e7 / lambda,
            two_j
        );
        let levels = parse_levels(&text).unwrap();
        let line = TransitionLine {
            upper_id: "hi".into(),
            lower_id: "lo".into(),
            lambda_nm: lambda,
            rate,
            source: mdclock::catalog::Source::Calculated,
            sign: if neg { -1 } else { 1 },
        };
        let d: f64 = reduced_dipole_from_rate(&line, &levels).unwrap();
        prop_assert_eq!(d < 0.0, neg);
        let back = rate_from_reduced_dipole(d, line.omega_au(), two_j);
        prop_assert!((back / rate - 1.0).abs() < 1e-12);
    }
}
