//! Transmit symbol streams, echo synthesis, the equivalent echo channel and
//! the signal seen at the user terminals.
//!
//! Echoes are synthesized in factorized form. For slot `q` every scatterer
//! reduces to one complex weight per beam,
//! `amplitude · (w_RXᴴ a_RX(θ)) · (a_TXᴴ(θ) w_b)`, so each `(n, m)` sample is a
//! short sum of scalar products and no array-sized matrix is ever formed.

use std::io::{Read, Write};
use std::ops::{Deref, DerefMut};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::arrayfield::array_factor;
use crate::channel::{doppler_phasor, range_phasor, ChannelRealization, ScattererKind};
use crate::commlink::{BitStream, Modulation};
use crate::error::{IsacError, Result};
use crate::powalloc::SlotPlan;
use crate::scenario::{SectorClass, SystemConfig, UserSpec};
use crate::SPEED_OF_LIGHT;

/// Dense complex `Q × N × M` array, indexed `[slot][symbol][subcarrier]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cube {
    pub slots: usize,
    pub symbols: usize,
    pub subcarriers: usize,
    pub data: Vec<Complex64>,
}

impl Cube {
    pub fn zeros(slots: usize, symbols: usize, subcarriers: usize) -> Self {
        Self { slots, symbols, subcarriers, data: vec![Complex64::new(0.0, 0.0); slots * symbols * subcarriers] }
    }

    #[inline]
    pub fn index(&self, q: usize, n: usize, m: usize) -> usize {
        (q * self.symbols + n) * self.subcarriers + m
    }

    #[inline]
    pub fn get(&self, q: usize, n: usize, m: usize) -> Complex64 {
        self.data[self.index(q, n, m)]
    }

    #[inline]
    pub fn set(&mut self, q: usize, n: usize, m: usize, v: Complex64) {
        let i = self.index(q, n, m);
        self.data[i] = v;
    }

    /// The `N × M` block of slot `q`.
    pub fn slot(&self, q: usize) -> &[Complex64] {
        let len = self.symbols * self.subcarriers;
        &self.data[q * len..(q + 1) * len]
    }

    pub fn slot_mut(&mut self, q: usize) -> &mut [Complex64] {
        let len = self.symbols * self.subcarriers;
        &mut self.data[q * len..(q + 1) * len]
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.slots, self.symbols, self.subcarriers)
    }
}

macro_rules! cube_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(pub Cube);

        impl Deref for $name {
            type Target = Cube;
            fn deref(&self) -> &Cube {
                &self.0
            }
        }

        impl DerefMut for $name {
            fn deref_mut(&mut self) -> &mut Cube {
                &mut self.0
            }
        }
    };
}

cube_newtype!(
    /// Received sensing echoes after the receive combiner.
    EchoTensor
);
cube_newtype!(
    /// Echoes divided by the known illuminating symbol.
    EecTensor
);

/// Symbols of every beam in every slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolStreams {
    /// Unit-modulus random-phase sensing symbols.
    pub sense: Cube,
    /// One stream per user.
    pub comm: Vec<Cube>,
    /// Bits behind each user's stream, in cube order.
    pub bits: Vec<BitStream>,
}

pub fn gen_symbols<R: Rng + ?Sized>(
    config: &SystemConfig,
    n_users: usize,
    modulation: Modulation,
    rng: &mut R,
) -> SymbolStreams {
    let (q, n, m) = (config.n_slots, config.n_symbols, config.n_subcarriers);
    let mut sense = Cube::zeros(q, n, m);
    for v in &mut sense.data {
        *v = Complex64::from_polar(1.0, rng.random::<f64>() * std::f64::consts::TAU);
    }
    let mut comm = Vec::with_capacity(n_users);
    let mut bits = Vec::with_capacity(n_users);
    for _ in 0..n_users {
        let b = BitStream::random(q * n * m * modulation.bits_per_symbol(), rng);
        let data = modulation.modulate(&b.bits).expect("bit count is a whole number of symbols");
        comm.push(Cube { slots: q, symbols: n, subcarriers: m, data });
        bits.push(b);
    }
    SymbolStreams { sense, comm, bits }
}

/// One transmit beam: pointing angle, amplitude `sqrt(ρ P_t / N_T)` and
/// its symbol stream (`None` for sensing, `Some(p)` for user `p`).
#[derive(Debug, Clone, Copy)]
struct Beam {
    angle: f64,
    amplitude: f64,
    stream: Option<usize>,
}

fn slot_beams(plan: &SlotPlan, users: &[UserSpec], config: &SystemConfig) -> Vec<Beam> {
    let scale = config.tx_power / config.n_tx as f64;
    let mut beams = vec![Beam { angle: plan.angle, amplitude: (plan.alloc.rho_s * scale).sqrt(), stream: None }];
    for (p, u) in users.iter().enumerate() {
        beams.push(Beam { angle: u.angle, amplitude: (plan.alloc.rho_c[p] * scale).sqrt(), stream: Some(p) });
    }
    beams.retain(|b| b.amplitude > 0.0);
    beams
}

fn stream<'a>(symbols: &'a SymbolStreams, b: &Beam) -> &'a Cube {
    match b.stream {
        None => &symbols.sense,
        Some(p) => &symbols.comm[p],
    }
}

/// Circularly-symmetric complex Gaussian sample with variance `var`.
pub fn complex_gaussian<R: Rng + ?Sized>(var: f64, rng: &mut R) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

/// Received echoes `w_RXᴴ H x + noise` for every slot, symbol and
/// subcarrier. Noise uses `config.noise_var_sense`; each slot draws from its
/// own stream seeded from `rng`, so the result does not depend on thread
/// scheduling.
pub fn synth_echoes<R: Rng + ?Sized>(
    realization: &ChannelRealization,
    plans: &[SlotPlan],
    symbols: &SymbolStreams,
    users: &[UserSpec],
    config: &SystemConfig,
    rng: &mut R,
) -> Result<EchoTensor> {
    let (n_slots, n_sym, n_sub) = symbols.sense.dims();
    if plans.len() != n_slots || n_sym != config.n_symbols || n_sub != config.n_subcarriers {
        return Err(IsacError::Dimension(format!(
            "{} plans and {n_slots}×{n_sym}×{n_sub} symbols for a {}×{}×{} configuration",
            plans.len(),
            config.n_slots,
            config.n_symbols,
            config.n_subcarriers
        )));
    }
    let clutter: Vec<_> = realization.clutter().copied().collect();
    let targets: Vec<_> = realization.scatterers.iter().filter(|s| s.kind == ScattererKind::Target).copied().collect();
    // delay phasors, shared by all slots
    let clutter_phase: Vec<Complex64> = clutter
        .iter()
        .flat_map(|s| (0..n_sub).map(move |m| range_phasor(s.range, m, config)))
        .collect();
    let target_range: Vec<Vec<Complex64>> =
        targets.iter().map(|s| (0..n_sub).map(|m| range_phasor(s.range, m, config)).collect()).collect();
    let target_doppler: Vec<Vec<Complex64>> =
        targets.iter().map(|s| (0..n_sym).map(|n| doppler_phasor(s.velocity, n, config)).collect()).collect();

    let seeds: Vec<u64> = (0..n_slots).map(|_| rng.random()).collect();
    let rx_norm = 1.0 / (config.n_rx as f64).sqrt();
    let noise_var = config.noise_var_sense;

    let mut out = Cube::zeros(n_slots, n_sym, n_sub);
    let block = n_sym * n_sub;
    out.data.par_chunks_mut(block).enumerate().for_each(|(q, y)| {
        let plan = &plans[q];
        let beams = slot_beams(plan, users, config);
        let weight = |angle: f64, amp: f64, b: &Beam| {
            let g_rx = array_factor(plan.angle, angle, config.n_rx, config) * rx_norm;
            let g_tx = array_factor(angle, b.angle, config.n_tx, config) * b.amplitude;
            g_rx * g_tx * amp
        };
        // static part per beam and subcarrier
        let mut stat = vec![Complex64::new(0.0, 0.0); beams.len() * n_sub];
        for (i, s) in clutter.iter().enumerate() {
            let phases = &clutter_phase[i * n_sub..(i + 1) * n_sub];
            for (bi, b) in beams.iter().enumerate() {
                let w = weight(s.angle, s.amplitude, b);
                for (acc, ph) in stat[bi * n_sub..(bi + 1) * n_sub].iter_mut().zip(phases) {
                    *acc += w * ph;
                }
            }
        }
        let target_w: Vec<Vec<Complex64>> =
            targets.iter().map(|s| beams.iter().map(|b| weight(s.angle, s.amplitude, b)).collect()).collect();
        let mut noise_rng = ChaCha8Rng::seed_from_u64(seeds[q]);
        for n in 0..n_sym {
            for m in 0..n_sub {
                let mut acc = Complex64::new(0.0, 0.0);
                for (bi, b) in beams.iter().enumerate() {
                    let mut h = stat[bi * n_sub + m];
                    for (k, w) in target_w.iter().enumerate() {
                        h += w[bi] * target_doppler[k][n] * target_range[k][m];
                    }
                    acc += h * stream(symbols, b).get(q, n, m);
                }
                if noise_var > 0.0 {
                    acc += complex_gaussian(noise_var, &mut noise_rng);
                }
                y[n * n_sub + m] = acc;
            }
        }
    });
    Ok(EchoTensor(out))
}

/// Divides each echo by the illuminating symbol: the sensing symbol in S4S
/// slots and the serving user's symbol in C4S slots.
pub fn eec(echoes: &EchoTensor, symbols: &SymbolStreams, plans: &[SlotPlan]) -> Result<EecTensor> {
    let mut out = echoes.0.clone();
    let block = out.symbols * out.subcarriers;
    let n_sub = out.subcarriers;
    for (q, plan) in plans.iter().enumerate() {
        let divisor = match plan.sector {
            SectorClass::S4S => &symbols.sense,
            SectorClass::C4S(p) => &symbols.comm[p],
        };
        let src = divisor.slot(q);
        for (i, (y, s)) in out.data[q * block..(q + 1) * block].iter_mut().zip(src).enumerate() {
            let magnitude = s.norm();
            if magnitude < 1e-6 {
                return Err(IsacError::DegenerateSymbol {
                    slot: q,
                    symbol: i / n_sub,
                    subcarrier: i % n_sub,
                    magnitude,
                });
            }
            *y /= s;
        }
    }
    Ok(EecTensor(out))
}

/// Signal received by every user in slot `q`: effective reception, multi-user
/// interference, sensing interference and noise. One `N × M` row-major
/// block per user.
pub fn user_rx<R: Rng + ?Sized>(
    users: &[UserSpec],
    plan: &SlotPlan,
    symbols: &SymbolStreams,
    q: usize,
    config: &SystemConfig,
    rng: &mut R,
) -> Vec<Vec<Complex64>> {
    let beams = slot_beams(plan, users, config);
    let (n_sym, n_sub) = (symbols.sense.symbols, symbols.sense.subcarriers);
    users
        .iter()
        .map(|u| {
            let gains: Vec<Complex64> =
                beams.iter().map(|b| array_factor(u.angle, b.angle, config.n_tx, config) * b.amplitude).collect();
            let fading: Vec<Complex64> = (0..n_sub)
                .map(|m| {
                    let phase = 2.0 * std::f64::consts::PI * config.subcarrier_freq(m) * u.range / SPEED_OF_LIGHT;
                    Complex64::from_polar(u.fading(config), phase)
                })
                .collect();
            let var = u.noise_var(config);
            let mut y = Vec::with_capacity(n_sym * n_sub);
            for n in 0..n_sym {
                for (m, f) in fading.iter().enumerate() {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (b, g) in beams.iter().zip(&gains) {
                        acc += g * stream(symbols, b).get(q, n, m);
                    }
                    let mut v = f * acc;
                    if var > 0.0 {
                        v += complex_gaussian(var, rng);
                    }
                    y.push(v);
                }
            }
            y
        })
        .collect()
}

/// Noise variance giving per-sample SNR `snr_db` for an echo of amplitude
/// `alpha` illuminated by a beam with power share `rho`:
/// `|α|² ρ P_t N_T N_R / σ²`.
pub fn noise_var_for_snr(snr_db: f64, alpha: f64, rho: f64, config: &SystemConfig) -> f64 {
    alpha * alpha * rho * config.tx_power * config.n_tx as f64 * config.n_rx as f64 / 10f64.powf(snr_db / 10.0)
}

/// Writes a cube as a little-endian `u64` header `Q, N, M` followed by
/// interleaved `f64` real and imaginary parts.
pub fn write_cube<W: Write>(mut w: W, cube: &Cube) -> Result<()> {
    for d in [cube.slots, cube.symbols, cube.subcarriers] {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for v in &cube.data {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_cube<R: Read>(mut r: R) -> Result<Cube> {
    let mut word = [0u8; 8];
    let mut dims = [0usize; 3];
    for d in &mut dims {
        r.read_exact(&mut word)?;
        *d = u64::from_le_bytes(word) as usize;
    }
    let mut cube = Cube::zeros(dims[0], dims[1], dims[2]);
    for v in &mut cube.data {
        r.read_exact(&mut word)?;
        let re = f64::from_le_bytes(word);
        r.read_exact(&mut word)?;
        *v = Complex64::new(re, f64::from_le_bytes(word));
    }
    Ok(cube)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrayfield::PowerAllocation;
    use crate::channel::Scatterer;
    use crate::powalloc::PlanStatus;

    fn cfg() -> SystemConfig {
        let mut c = SystemConfig::half_wavelength(16, 16, 220e9, 5e5, 8, 8);
        c.n_slots = 3;
        c.noise_var_sense = 0.0;
        c
    }

    fn plan(q: usize, angle: f64, sector: SectorClass, alloc: PowerAllocation) -> SlotPlan {
        SlotPlan { slot: q, angle, sector, alloc, esp: 0.0, sinr: vec![], status: PlanStatus::Optimal }
    }

    fn sensing_plans(angles: &[f64]) -> Vec<SlotPlan> {
        angles.iter().enumerate().map(|(q, &a)| plan(q, a, SectorClass::S4S, PowerAllocation::sensing_only(0))).collect()
    }

    #[test]
    fn sensing_symbols_unit_modulus_and_uncorrelated() {
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = gen_symbols(&c, 1, Modulation::Qam16, &mut rng);
        assert!(s.sense.data.iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
        let n = s.sense.data.len() as f64;
        let corr: Complex64 = s.sense.data.iter().zip(&s.comm[0].data).map(|(a, b)| a * b.conj()).sum::<Complex64>() / n;
        assert!(corr.norm() < 3.0 / n.sqrt());
    }

    #[test]
    fn empty_channel_noiseless_is_zero() {
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = gen_symbols(&c, 0, Modulation::Qam16, &mut rng);
        let ch = ChannelRealization { scatterers: vec![] };
        let y = synth_echoes(&ch, &sensing_plans(&[-0.3, 0.0, 0.3]), &s, &[], &c, &mut rng).unwrap();
        assert!(y.data.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn aligned_static_scatterer_gain() {
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = gen_symbols(&c, 0, Modulation::Qam16, &mut rng);
        let beta = 0.7;
        let ch = ChannelRealization {
            scatterers: vec![Scatterer { kind: ScattererKind::Clutter, amplitude: beta, angle: 0.2, range: 50.0, velocity: 0.0 }],
        };
        let plans = sensing_plans(&[-0.5, 0.2, 0.6]);
        let y = synth_echoes(&ch, &plans, &s, &[], &c, &mut rng).unwrap();
        let h = eec(&y, &s, &plans).unwrap();
        let expected = beta * (c.tx_power * 16.0 * 16.0).sqrt();
        for m in 0..8 {
            let first = h.get(1, 0, m);
            assert!((first.norm() - expected).abs() < 1e-9 * expected);
            assert!((0..8).all(|n| (h.get(1, n, m) - first).norm() < 1e-9 * expected));
        }
    }

    #[test]
    fn eec_selects_divisor_by_sector() {
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = gen_symbols(&c, 1, Modulation::Qpsk, &mut rng);
        let mut y = EchoTensor(Cube::zeros(3, 8, 8));
        y.data.iter_mut().for_each(|v| *v = Complex64::new(1.0, 0.5));
        let alloc = PowerAllocation::new(0.0, vec![1.0]).unwrap();
        let plans = vec![
            plan(0, -0.3, SectorClass::S4S, PowerAllocation::new(0.5, vec![0.5]).unwrap()),
            plan(1, 0.0, SectorClass::C4S(0), alloc.clone()),
            plan(2, 0.3, SectorClass::S4S, PowerAllocation::new(0.5, vec![0.5]).unwrap()),
        ];
        let h = eec(&y, &s, &plans).unwrap();
        assert!((h.get(0, 2, 3) - y.get(0, 2, 3) / s.sense.get(0, 2, 3)).norm() < 1e-15);
        assert!((h.get(1, 2, 3) - y.get(1, 2, 3) / s.comm[0].get(1, 2, 3)).norm() < 1e-15);
    }

    #[test]
    fn degenerate_divisor_is_reported() {
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut s = gen_symbols(&c, 0, Modulation::Qpsk, &mut rng);
        s.sense.set(2, 1, 4, Complex64::new(1e-9, 0.0));
        let y = EchoTensor(Cube::zeros(3, 8, 8));
        let err = eec(&y, &s, &sensing_plans(&[-0.3, 0.0, 0.3])).unwrap_err();
        assert!(matches!(err, IsacError::DegenerateSymbol { slot: 2, symbol: 1, subcarrier: 4, .. }));
    }

    #[test]
    fn single_user_noiseless_reception() {
        let mut c = cfg();
        c.noise_var_user = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = gen_symbols(&c, 1, Modulation::Qam16, &mut rng);
        let users = vec![UserSpec::new(40.0, 0.1, 10.0)];
        let p = plan(1, 0.1, SectorClass::C4S(0), PowerAllocation::new(0.0, vec![1.0]).unwrap());
        let rx = user_rx(&users, &p, &s, 1, &c, &mut rng);
        for n in 0..8 {
            for m in 0..8 {
                let g = crate::commlink::effective_gain(&users[0], 1.0, m, &c);
                assert!((rx[0][n * 8 + m] - g * s.comm[0].get(1, n, m)).norm() < 1e-12 * g.norm());
            }
        }
    }

    #[test]
    fn cube_dump_round_trip() {
        let mut cube = Cube::zeros(2, 3, 4);
        for (i, v) in cube.data.iter_mut().enumerate() {
            *v = Complex64::new(i as f64, -(i as f64) / 3.0);
        }
        let mut buf = Vec::new();
        write_cube(&mut buf, &cube).unwrap();
        assert_eq!(buf.len(), 24 + 16 * 24);
        assert_eq!(read_cube(buf.as_slice()).unwrap(), cube);
    }
}
