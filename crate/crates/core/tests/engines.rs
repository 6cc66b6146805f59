use proptest::prelude::*;
use qrotor::*;

fn exact(p: &ModelParams) -> f64 {
    lowest_k(p, 1).unwrap().values[0]
}

#[test]
fn dmrg_reaches_the_exact_ground_energy() {
    for p in [
        ModelParams::new(5, 2).ej(1.5),
        ModelParams::new(5, 2).ej(1.0).ej2(0.4).eps(0.3),
        ModelParams::new(5, 2).ej(0.8).ej1(0.2).ej2(0.3).eg(0.1),
    ] {
        let e = ground_state(
            &build_hamiltonian(&p).unwrap(),
            &DmrgSettings::for_length(5).chi_max(25),
        )
        .unwrap()
        .energy;
        let e0 = exact(&p);
        assert!((e - e0).abs() <= 1e-8 * e0.abs(), "{e} vs {e0}");
    }
}

#[test]
fn truncated_energies_are_variational() {
    let p = ModelParams::new(12, 3).ej(1.5).ej2(0.2);
    let h = build_hamiltonian(&p).unwrap();
    let mut last = f64::INFINITY;
    for chi in [2, 4, 8, 16] {
        let r = ground_state(&h, &DmrgSettings::for_length(12).chi_max(chi)).unwrap();
        assert!(r.energy <= last + 1e-10, "chi {chi}: {} above {last}", r.energy);
        assert!((energy_expectation(&r.mps, &h).unwrap() - r.energy).abs() < 1e-8);
        last = r.energy;
    }
}

#[test]
fn infinite_chain_matches_the_bulk_of_a_long_open_chain() {
    let p = ModelParams::new(2, 3).ej(2.0).ej2(0.3);
    let u = idmrg_fixed_point(&p, &IdmrgSettings::default().chi_max(24)).unwrap();
    // energy per site of the bulk from the difference of two open chains
    let s = DmrgSettings::for_length(40).chi_max(24);
    let e40 = ground_state(&build_hamiltonian(&p.clone().len(40)).unwrap(), &s)
        .unwrap()
        .energy;
    let e20 = ground_state(&build_hamiltonian(&p.clone().len(20)).unwrap(), &s)
        .unwrap()
        .energy;
    let bulk = (e40 - e20) / 20.0;
    assert!((bulk - u.energy_density).abs() < 1e-6, "{bulk} vs {}", u.energy_density);
}

#[test]
fn parity_sectors_give_the_sg_doublet() {
    let p = ModelParams::new(6, 2).ej(1.5).ej2(0.5);
    let s = DmrgSettings::for_length(6).chi_max(25);
    let even = excited_in_sector(&p, 1, qrotor::dmrg::SECTOR_BIAS, &s).unwrap();
    let odd = excited_in_sector(&p, -1, qrotor::dmrg::SECTOR_BIAS, &s).unwrap();
    let spec = lowest_k(&p, 2).unwrap();
    let mut got = [even.energy, odd.energy];
    got.sort_by(f64::total_cmp);
    for (g, w) in got.iter().zip(&spec.values) {
        assert!((g - w).abs() < 1e-7, "{g} vs {w}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn small_chains_agree_with_ed(
        ej in 0.2f64..2.5,
        ej1 in 0.0f64..0.4,
        ej2 in 0.0f64..0.6,
        eps in 0.0f64..0.6,
        eg in -0.4f64..0.4,
    ) {
        let p = ModelParams::new(4, 2).ej(ej).ej1(ej1).ej2(ej2).eps(eps).eg(eg);
        let e = ground_state(&build_hamiltonian(&p).unwrap(), &DmrgSettings::for_length(4).chi_max(25)).unwrap().energy;
        let e0 = exact(&p);
        prop_assert!((e - e0).abs() <= 1e-8 * e0.abs().max(1.0));
    }
}
