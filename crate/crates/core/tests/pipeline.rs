use irfsphere::empirical::{criterion, select_kappa, Dataset, LagGrid};
use irfsphere::fitting::fit_r;
use irfsphere::icf::IcfModel;
use irfsphere::io;
use irfsphere::kriging::{rmse, KrigingModel};
use irfsphere::rng::stream_rng;
use irfsphere::simulate::{simulate_field, train_test_split, uniform_sphere_points, SimulationConfig};
use rand_distr::{Distribution, StandardNormal};

#[test]
fn simulate_estimate_fit_krige_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate_field(&SimulationConfig::<f64>::new(3, 0.75, 800, 21)).unwrap();
    let path = dir.path().join("obs.csv");
    io::write_observations(&path, &sim.data).unwrap();
    let data = io::read_observations(&path, false, 0.0).unwrap();
    assert_eq!(data.values(), sim.data.values());

    let (train, test) = train_test_split(&data, 0.9, 21).unwrap();
    let table = criterion(&train, &LagGrid::uniform(30).unwrap(), 7).unwrap();
    let kappa = select_kappa(&table, 10.0).unwrap().kappa;
    assert_eq!(kappa, 3);
    let fit = fit_r(&table.profile(kappa).unwrap()).unwrap();
    assert!(fit.r_hat > 0.0 && fit.r_hat <= irfsphere::icf::R_MAX);

    let fit_path = dir.path().join("fit.json");
    io::write_fit(&fit_path, &io::FitReport::from(&fit)).unwrap();
    let report = io::read_fit(&fit_path).unwrap();
    assert_eq!(report.r_hat, fit.r_hat);

    let model = KrigingModel::new(train, IcfModel::new(report.kappa, report.r_hat).unwrap()).unwrap();
    let uk = rmse(&model.predict(test.points()).unwrap(), test.values()).unwrap();
    let spread = (test.values().iter().map(|v| v * v).sum::<f64>() / test.len() as f64).sqrt();
    assert!(uk < 0.1 * spread, "rmse {uk} vs spread {spread}");
}

#[test]
fn white_noise_is_read_as_homogeneous() {
    let grid = LagGrid::uniform(30).unwrap();
    let mut zero = 0;
    for seed in 0..20 {
        let points = uniform_sphere_points::<f64>(1500, seed).unwrap();
        let mut rng = stream_rng(seed, 77);
        let values = (0..points.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let table = criterion(&Dataset::new(points, values, 0.0).unwrap(), &grid, 7).unwrap();
        if select_kappa(&table, 10.0).unwrap().kappa == 0 {
            zero += 1;
        }
    }
    assert!(zero >= 18, "kappa_hat = 0 in {zero}/20");
}

#[test]
fn degree_coordinates_match_radians() {
    let dir = tempfile::tempdir().unwrap();
    let rad = dir.path().join("rad.csv");
    let deg = dir.path().join("deg.csv");
    std::fs::write(&rad, "psi_rad,zeta_rad,value\n0.5,1.0,2.0\n3.0,0.25,-1.5\n").unwrap();
    let rows: Vec<String> = [(0.5f64, 1.0f64, 2.0), (3.0, 0.25, -1.5)]
        .iter()
        .map(|(psi, zeta, v)| format!("{},{},{v}", psi.to_degrees(), 90.0 - zeta.to_degrees()))
        .collect();
    std::fs::write(&deg, format!("lon_deg,lat_deg,value\n{}\n", rows.join("\n"))).unwrap();
    let a = io::read_observations(&rad, false, 0.0).unwrap();
    let b = io::read_observations(&deg, true, 0.0).unwrap();
    for (p, q) in a.points().iter().zip(b.points()) {
        assert!((p.psi() - q.psi()).abs() < 1e-12 && (p.zeta() - q.zeta()).abs() < 1e-12);
    }
    assert_eq!(a.values(), b.values());
}
