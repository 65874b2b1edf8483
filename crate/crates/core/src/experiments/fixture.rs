use crate::error::Result;
use crate::models::{train, BlobFixture, Dataset, MlpSpec, TrainConfig};
use crate::surgery::SurgeryConfig;
use crate::vecspace::ParamVector;

/// One hidden tanh layer of width 16 over the fixture's inputs.
pub fn fixture_spec(fixture: &BlobFixture) -> Result<MlpSpec> {
    MlpSpec::tanh(fixture.dim, &[16], fixture.classes)
}

pub fn fixture_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 30,
        seed,
        ..TrainConfig::default()
    }
}

/// Surgery settings calibrated for the imbalanced four-class fixture.
pub fn fixture_surgery_config(seed: u64) -> SurgeryConfig {
    SurgeryConfig {
        seed,
        ..SurgeryConfig::new(10, 3, 0.045, 0.0045)
    }
}

pub struct FixtureModel {
    pub spec: MlpSpec,
    pub theta: ParamVector,
    pub data: Dataset,
}

/// Generates the preset and trains the fixture model on its training split.
pub fn fixture_model(preset: &str, seed: u64) -> Result<FixtureModel> {
    let fixture = BlobFixture::preset(preset, seed)?;
    let data = fixture.generate()?;
    let spec = fixture_spec(&fixture)?;
    let theta = train(&spec, data.train(), &fixture_train_config(seed))?.theta;
    Ok(FixtureModel { spec, theta, data })
}
