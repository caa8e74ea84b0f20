//! One draw of the multiuser link: every user's channel, the desired user's
//! RAKE weights, and the composite pulses the analysis and the waveform
//! simulator both work from.
//!
//! Draws are keyed by `(master_seed, index)`. The theory ensemble and the
//! Monte Carlo simulator use the same key and therefore see the same channels.

use crate::channel::{
    composite_waveform, sample_channel_counted, ChannelParams, ChannelRealization, CompositeWaveform,
};
use crate::error::Result;
use crate::pulses::Pulse;
use crate::rng::{stream, StreamRole};
use crate::transceiver::{select_combiner, CombiningScheme, PathSelection, RakeCombiner, SystemConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CombinerSpec {
    pub scheme: CombiningScheme,
    pub selection: PathSelection,
}

impl Default for CombinerSpec {
    fn default() -> Self {
        Self {
            scheme: CombiningScheme::Mrc,
            selection: PathSelection::All,
        }
    }
}

/// Everything that defines a link apart from the random draws.
#[derive(Debug, Clone)]
pub struct LinkSetup {
    pub config: SystemConfig,
    pub pulses: Vec<Pulse>,
    /// Channel statistics at unit power; interferers get
    /// `config.interferer_power` applied on top.
    pub channel: ChannelParams,
    pub combiner: CombinerSpec,
}

impl LinkSetup {
    pub fn new(
        config: SystemConfig,
        pulses: Vec<Pulse>,
        channel: ChannelParams,
        combiner: CombinerSpec,
    ) -> Result<Self> {
        config.validate()?;
        config.check_pulses(&pulses)?;
        channel.validate()?;
        Ok(Self {
            config,
            pulses,
            channel,
            combiner,
        })
    }

    pub fn interferer_channel(&self) -> ChannelParams {
        self.channel
            .with_power_scale(self.channel.power_scale * self.config.interferer_power)
    }
}

#[derive(Debug, Clone)]
pub struct LinkRealization {
    /// Channel of each user; index 0 is the desired user.
    pub channels: Vec<ChannelRealization>,
    pub combiner: RakeCombiner,
    /// `u[k][r]`: pulse type `r` of user `k` through its channel.
    pub u: Vec<Vec<CompositeWaveform>>,
    /// `v[r]`: template pulse of type `r` for the desired user.
    pub v: Vec<CompositeWaveform>,
    /// Channel draws spent, including rejected ones.
    pub draws: usize,
}

pub fn draw_realization(setup: &LinkSetup, master_seed: u64, index: u64) -> Result<LinkRealization> {
    let cfg = &setup.config;
    let interferer = setup.interferer_channel();
    let mut channels = Vec::with_capacity(cfg.users);
    let mut draws = 0;
    for k in 0..cfg.users {
        let params = if k == 0 { &setup.channel } else { &interferer };
        let mut rng = stream(master_seed, index, StreamRole::Channel(k as u32));
        let (c, n) = sample_channel_counted(params, cfg, &mut rng)?;
        draws += n;
        channels.push(c);
    }
    let combiner = select_combiner(&channels[0], setup.combiner.scheme, setup.combiner.selection)?;
    let u = channels
        .iter()
        .map(|c| {
            setup
                .pulses
                .iter()
                .map(|p| composite_waveform(p, c, c.gains()))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let v = setup
        .pulses
        .iter()
        .map(|p| composite_waveform(p, &channels[0], &combiner.beta))
        .collect::<Result<Vec<_>>>()?;
    Ok(LinkRealization {
        channels,
        combiner,
        u,
        v,
        draws,
    })
}
