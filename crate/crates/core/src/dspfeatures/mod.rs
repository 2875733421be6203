//! Log-Mel spectrograms (encoder input) and handcrafted timbre descriptors.

mod descriptors;
mod dump;
mod mel;
mod normalize;

pub use descriptors::{
    energy_envelope, timbre_descriptors, DescriptorVector, DESCRIPTOR_DIM, DESCRIPTOR_NAMES,
};
pub use dump::{decode_dump, encode_dump};
pub use mel::{
    hann, hz_to_mel, mel_centers, mel_spectrogram, mel_to_hz, FeatureParams, MelFrontend,
    MelSpectrogram,
};
pub use normalize::{fit_normalizer, Normalizer};

use crate::audio::AudioBuffer;
use crate::error::Result;

/// Everything the encoders and the descriptor baseline need from one sound,
/// computed from a single STFT pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SoundFeatures {
    /// Temporal mean and max of each log-Mel band.
    pub pooled_mel: Vec<f64>,
    pub descriptors: Option<DescriptorVector>,
}

impl MelFrontend {
    pub fn analyze(&self, audio: &AudioBuffer, with_descriptors: bool) -> Result<SoundFeatures> {
        self.check_rate(audio)?;
        let stft = self.magnitude_stft(&audio.samples)?;
        let pooled_mel = self.mel_from_stft(&stft).pooled();
        let descriptors = if with_descriptors {
            Some(descriptors::descriptors_from_stft(self, audio, &stft)?)
        } else {
            None
        };
        Ok(SoundFeatures {
            pooled_mel,
            descriptors,
        })
    }
}
