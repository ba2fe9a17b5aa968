//! Module toggles and the named configurations of the ablation tables.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoiSource {
    /// Learned free tokens.
    Random,
    /// Pooled features inside the observed boxes.
    Roi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateSource {
    Random,
    /// Fully connected maps of the observed trajectory.
    States,
}

impl RoiSource {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "random" => Some(RoiSource::Random),
            "roi" => Some(RoiSource::Roi),
            _ => None,
        }
    }
}

impl StateSource {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "random" => Some(StateSource::Random),
            "states" => Some(StateSource::States),
            _ => None,
        }
    }
}

impl fmt::Display for RoiSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RoiSource::Random => "random",
            RoiSource::Roi => "roi",
        })
    }
}

impl fmt::Display for StateSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StateSource::Random => "random",
            StateSource::States => "states",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IsmConfig {
    pub enabled: bool,
    pub init_roi: RoiSource,
    pub init_state: StateSource,
    pub collect: bool,
    pub pass: bool,
    /// ROI token count.
    pub m: usize,
    /// State token count.
    pub n: usize,
}

impl IsmConfig {
    pub fn full(m: usize, n: usize) -> Self {
        IsmConfig { enabled: true, init_roi: RoiSource::Roi, init_state: StateSource::States, collect: true, pass: true, m, n }
    }

    pub fn off() -> Self {
        IsmConfig { enabled: false, m: 0, n: 0, ..Self::full(0, 0) }
    }

    /// Messenger counts actually instantiated.
    pub fn counts(&self) -> (usize, usize) {
        if self.enabled { (self.m, self.n) } else { (0, 0) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ablation {
    /// Video branch and video decoder.
    pub video: bool,
    /// Motion branch and motion decoder.
    pub motion: bool,
    /// Temporal gate in the video attention; off gives plain MHSA.
    pub sta: bool,
    pub tsgl: bool,
    pub ism: IsmConfig,
}

impl Ablation {
    pub fn full(m: usize, n: usize) -> Self {
        Ablation { video: true, motion: true, sta: true, tsgl: true, ism: IsmConfig::full(m, n) }
    }

    /// Plain single-branch transformer video predictor.
    pub fn vp() -> Self {
        Ablation { video: true, motion: false, sta: false, tsgl: false, ism: IsmConfig::off() }
    }

    pub fn check(&self) -> Result<(), String> {
        if !self.video && !self.motion {
            return Err("at least one of ablation.video and ablation.motion must be on".into());
        }
        if self.ism.enabled {
            if !(self.video && self.motion) {
                return Err("ism.enabled needs both the video and the motion branch".into());
            }
            if self.ism.m == 0 || self.ism.n == 0 {
                return Err("ism.m and ism.n must be at least 1 when ism.enabled".into());
            }
        }
        if self.tsgl && !(self.video && self.motion) {
            return Err("ablation.tsgl needs both the video and the motion branch".into());
        }
        if self.sta && !self.video {
            return Err("ablation.sta needs the video branch".into());
        }
        Ok(())
    }
}

/// Named rows of the module, initialization-source, messenger-count and
/// ISM-phase ablations, each as a runnable flag combination.
pub fn lattice(m: usize, n: usize) -> Vec<(String, Ablation)> {
    let full = Ablation::full(m, n);
    let no_ism = Ablation { tsgl: false, ism: IsmConfig::off(), ..full };
    let mut rows = vec![
        ("modules/VP".to_string(), Ablation::vp()),
        ("modules/MP".into(), Ablation { video: false, sta: false, ..no_ism }),
        ("modules/VP+STA".into(), Ablation { sta: true, ..Ablation::vp() }),
        ("modules/VP+MP+STA".into(), no_ism),
        ("modules/VP+MP+STA+ISM".into(), Ablation { tsgl: false, ..full }),
        ("modules/VP+MP+STA+ISM+TSGL".into(), full),
    ];
    for (r, s) in [
        (RoiSource::Random, StateSource::Random),
        (RoiSource::Roi, StateSource::Random),
        (RoiSource::Random, StateSource::States),
        (RoiSource::Roi, StateSource::States),
    ] {
        let ism = IsmConfig { init_roi: r, init_state: s, ..full.ism };
        rows.push((format!("init/{r}+{s}"), Ablation { ism, ..full }));
    }
    for (cm, cn) in [(2, 2), (4, 4), (8, 8), (4, 2), (8, 4), (16, 8), (4, 1), (8, 2), (16, 4)] {
        rows.push((format!("counts/{cm}:{cn}"), Ablation { ism: IsmConfig { m: cm, n: cn, ..full.ism }, ..full }));
    }
    let random = IsmConfig { init_roi: RoiSource::Random, init_state: StateSource::Random, ..full.ism };
    rows.push(("phases/none".into(), Ablation { ism: IsmConfig::off(), ..full }));
    rows.push(("phases/b+c".into(), Ablation { ism: random, ..full }));
    rows.push(("phases/a+c".into(), Ablation { ism: IsmConfig { collect: false, ..full.ism }, ..full }));
    rows.push(("phases/a+b".into(), Ablation { ism: IsmConfig { pass: false, ..full.ism }, ..full }));
    rows.push(("phases/a+b+c".into(), full));
    rows
}
