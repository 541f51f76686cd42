use outbreak_core::eval::{outbreak_correlation, posterior_outbreak_probabilities, relative_risks};
use outbreak_core::math::quantile;
use outbreak_core::model::{ModelSpec, SurveillanceModel, Variant};
use outbreak_core::sampler::{fit, SamplerConfig};
use outbreak_core::simulator::{nine_city_adjacency, simulate_dataset, SimulationConfig};

#[test]
fn independent_fits_agree_and_recover_relative_risks() {
    let sim = SimulationConfig {
        seed: 3,
        ..SimulationConfig::nine_city(Variant::I)
    };
    let (data, truth) = simulate_dataset(&sim, &nine_city_adjacency()).unwrap();
    let model = SurveillanceModel::new(data, ModelSpec::monthly(Variant::I)).unwrap();
    let run = |seed| {
        let config = SamplerConfig {
            n_chains: 2,
            n_iterations: 3000,
            n_warmup: 1500,
            seed,
            ..SamplerConfig::default()
        };
        fit(&model, &config).unwrap()
    };
    let (a, b) = (run(21), run(22));

    let maps = [
        posterior_outbreak_probabilities(&model, &a, Some(500)).unwrap(),
        posterior_outbreak_probabilities(&model, &b, Some(500)).unwrap(),
    ];
    let corr = outbreak_correlation(&maps).unwrap();
    assert!(corr[0][1] > 0.95, "map correlation {}", corr[0][1]);

    let medians = relative_risks(&a);
    for (i, &u) in truth.spatial.iter().enumerate() {
        let draws: Vec<f64> = a.column(a.layout.spatial_range().start + i).into_iter().map(f64::exp).collect();
        let (lo, hi) = (quantile(&draws, 0.025), quantile(&draws, 0.975));
        assert!(lo <= u.exp() && u.exp() <= hi, "location {i}: true risk {} outside [{lo}, {hi}]", u.exp());
        assert!(lo <= medians[i] && medians[i] <= hi);
    }
}
