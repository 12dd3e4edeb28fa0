//! Federated rounds over cycle-consistent GAN clients.
//!
//! The server owns only the two generators. Each client owns private
//! discriminators (plus their momentum buffers) and its data. A round
//! broadcasts the server generators, trains every client locally, and
//! replaces the server generators with the data-weighted average of the
//! returned generator parameters. The centralized baseline runs the same
//! local loop over pooled data.
//!
//! All randomness inside local training comes from a stream keyed by
//! `(seed, client id, client epoch)`, so results do not depend on which
//! thread trains which client or in what order.

use std::fmt;
use std::sync::Arc;

use crate::autodiff::{Tape, Var};
use crate::data::{ClientDataset, Sample, TrainItem};
use crate::dp::{dp_gradient_step, DpConfig};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::losses::{self, GeneratorLossParts, LossWeights};
use crate::metrics;
use crate::models::{Discriminator, DiscriminatorConfig, Generator, GeneratorConfig, Network};
use crate::rng::SeededRng;
use crate::tensor::{ParamVector, Tensor};

const STREAM_EPOCH: u64 = 0x6570_6f63;
const INIT_GEN_AB: u64 = 0x6761_62;
const INIT_GEN_BA: u64 = 0x6762_61;
const INIT_DISC_AB: u64 = 0x6461_62;
const INIT_DISC_BA: u64 = 0x6462_61;

#[derive(Clone, Debug, PartialEq)]
pub struct RoundConfig {
    pub local_epochs: usize,
    pub rounds: usize,
    pub batch_size: usize,
    pub lr_g: f64,
    pub lr_d: f64,
    /// Heavy-ball momentum of the discriminator SGD.
    pub momentum_d: f64,
    pub dp: DpConfig,
    pub loss_weights: LossWeights,
}

impl Default for RoundConfig {
    fn default() -> Self {
        RoundConfig {
            local_epochs: 3,
            rounds: 10,
            batch_size: 4,
            lr_g: 0.002,
            lr_d: 0.01,
            momentum_d: 0.5,
            dp: DpConfig::default(),
            loss_weights: LossWeights::default(),
        }
    }
}

impl RoundConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        if !(self.lr_g >= 0.0 && self.lr_d >= 0.0) {
            return Err(Error::InvalidArgument("learning rates must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum_d) {
            return Err(Error::InvalidArgument(
                "discriminator momentum must be in [0,1)".into(),
            ));
        }
        self.dp.validate()?;
        self.loss_weights.validate()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelConfig {
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
}

impl ModelConfig {
    pub fn with_image_size(image_size: usize) -> Self {
        ModelConfig {
            generator: GeneratorConfig {
                image_size,
                ..GeneratorConfig::default()
            },
            discriminator: DiscriminatorConfig {
                image_size,
                ..DiscriminatorConfig::default()
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    AtoB,
    BtoA,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::AtoB, Direction::BtoA];
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::AtoB => "A→B",
            Direction::BtoA => "B→A",
        })
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A→B" | "A->B" => Ok(Direction::AtoB),
            "B→A" | "B->A" => Ok(Direction::BtoA),
            other => Err(Error::Data(format!("unknown direction `{other}`"))),
        }
    }
}

/// Test-set quality of one translation direction at one evaluation point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRecord {
    pub round: usize,
    pub direction: Direction,
    pub mae: f64,
    pub psnr: f64,
    pub ssim: f64,
}

/// Mean MAE/PSNR/SSIM of both translation directions over `test`, with
/// generator outputs rescaled to `[0,1]`.
pub fn evaluate(
    gen_ab: &Generator,
    gen_ba: &Generator,
    test: &[Sample],
    round: usize,
    exec: Execution,
) -> Result<[MetricsRecord; 2]> {
    if test.is_empty() {
        return Err(Error::InvalidArgument(
            "evaluation needs a non-empty test set".into(),
        ));
    }
    let per_sample = exec.map_range(test.len(), |i| -> Result<[[f64; 3]; 2]> {
        let s = &test[i];
        let fake_b = metrics::to_unit_range(&gen_ab.forward(&signed(&s.modality_a))?);
        let fake_a = metrics::to_unit_range(&gen_ba.forward(&signed(&s.modality_b))?);
        let score = |pred: &Tensor, target: &Tensor| -> Result<[f64; 3]> {
            Ok([
                metrics::mae(pred, target)?,
                metrics::psnr(pred, target)?,
                metrics::ssim(pred, target)?,
            ])
        };
        Ok([
            score(&fake_b, &s.modality_b)?,
            score(&fake_a, &s.modality_a)?,
        ])
    });
    let mut sums = [[0.0; 3]; 2];
    for r in per_sample {
        let r = r?;
        for d in 0..2 {
            for m in 0..3 {
                sums[d][m] += r[d][m];
            }
        }
    }
    let n = test.len() as f64;
    let record = |d: usize, direction| MetricsRecord {
        round,
        direction,
        mae: sums[d][0] / n,
        psnr: sums[d][1] / n,
        ssim: sums[d][2] / n,
    };
    Ok([record(0, Direction::AtoB), record(1, Direction::BtoA)])
}

fn signed(image: &Tensor) -> Tensor {
    image.map(|v| 2.0 * v - 1.0)
}

/// Generators, discriminators and discriminator momentum of one trainer.
#[derive(Clone, Debug)]
pub struct LocalModels {
    pub gen_ab: Generator,
    pub gen_ba: Generator,
    disc_ab: Discriminator,
    disc_ba: Discriminator,
    velocity_ab: Vec<f64>,
    velocity_ba: Vec<f64>,
}

impl LocalModels {
    /// Deterministic initialization for trainer `client_id` under `seed`.
    pub fn init(models: &ModelConfig, seed: u64, client_id: usize) -> Result<Self> {
        let key = |tag| SeededRng::derive(seed, &[tag]).next_u64();
        let dkey = |tag| SeededRng::derive(seed, &[tag, client_id as u64]).next_u64();
        let disc_ab = Discriminator::new(models.discriminator.clone(), dkey(INIT_DISC_AB))?;
        let disc_ba = Discriminator::new(models.discriminator.clone(), dkey(INIT_DISC_BA))?;
        Ok(LocalModels {
            gen_ab: Generator::new(models.generator.clone(), key(INIT_GEN_AB))?,
            gen_ba: Generator::new(models.generator.clone(), key(INIT_GEN_BA))?,
            velocity_ab: vec![0.0; disc_ab.params().numel()],
            velocity_ba: vec![0.0; disc_ba.params().numel()],
            disc_ab,
            disc_ba,
        })
    }

    pub fn disc_ab(&self) -> &Discriminator {
        &self.disc_ab
    }

    pub fn disc_ba(&self) -> &Discriminator {
        &self.disc_ba
    }
}

/// Mean losses over one epoch's minibatches.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EpochStats {
    pub generator_loss: f64,
    pub discriminator_loss: f64,
}

struct GenPass {
    tape: Tape,
    gen_ab: Vec<Var>,
    gen_ba: Vec<Var>,
    real_a: Var,
    real_b: Var,
    fake_a: Var,
    fake_b: Var,
    rec_a: Var,
    rec_b: Var,
    paired: bool,
}

fn non_finite(stage: &str, what: &str, value: f64) -> Error {
    Error::Divergence {
        stage: stage.to_string(),
        detail: format!("{what} is {value}"),
    }
}

fn momentum_step(
    disc: &mut Discriminator,
    velocity: &mut [f64],
    lr: f64,
    momentum: f64,
) -> Result<()> {
    let grad = disc.params().grad_vector();
    let mut params = disc.flatten_params();
    for ((p, v), g) in params
        .values_mut()
        .iter_mut()
        .zip(velocity.iter_mut())
        .zip(grad.values())
    {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
    disc.unflatten_params(&params)?;
    disc.params_mut().zero_grad();
    Ok(())
}

impl LocalModels {
    fn forward_generators(&self, item: &TrainItem<'_>) -> Result<GenPass> {
        let mut tape = Tape::new();
        let gen_ab = self.gen_ab.params().bind(&mut tape);
        let gen_ba = self.gen_ba.params().bind(&mut tape);
        let real_a = tape.constant(signed(item.a));
        let real_b = tape.constant(signed(item.b));
        let fake_b = self.gen_ab.trace(&mut tape, &gen_ab, real_a)?.output;
        let rec_a = self.gen_ba.trace(&mut tape, &gen_ba, fake_b)?.output;
        let fake_a = self.gen_ba.trace(&mut tape, &gen_ba, real_b)?.output;
        let rec_b = self.gen_ab.trace(&mut tape, &gen_ab, fake_a)?.output;
        Ok(GenPass {
            tape,
            gen_ab,
            gen_ba,
            real_a,
            real_b,
            fake_a,
            fake_b,
            rec_a,
            rec_b,
            paired: item.paired,
        })
    }

    /// One least-squares step of both discriminators on detached fakes.
    fn discriminator_step(
        &mut self,
        passes: &[GenPass],
        cfg: &RoundConfig,
        stage: &str,
    ) -> Result<f64> {
        let scale = 1.0 / passes.len() as f64;
        let mut total = 0.0;
        for pass in passes {
            let mut tape = Tape::new();
            let d_ab = self.disc_ab.params().bind(&mut tape);
            let d_ba = self.disc_ba.params().bind(&mut tape);
            let real_b = tape.constant(pass.tape.value(pass.real_b).clone());
            let fake_b = tape.constant(pass.tape.value(pass.fake_b).clone());
            let real_a = tape.constant(pass.tape.value(pass.real_a).clone());
            let fake_a = tape.constant(pass.tape.value(pass.fake_a).clone());
            let lr_b = self.disc_ab.trace(&mut tape, &d_ab, real_b)?;
            let lf_b = self.disc_ab.trace(&mut tape, &d_ab, fake_b)?;
            let lr_a = self.disc_ba.trace(&mut tape, &d_ba, real_a)?;
            let lf_a = self.disc_ba.trace(&mut tape, &d_ba, fake_a)?;
            let loss_ab = losses::adv_discriminator_on(&mut tape, lr_b, lf_b)?;
            let loss_ba = losses::adv_discriminator_on(&mut tape, lr_a, lf_a)?;
            let loss = tape.add(loss_ab, loss_ba)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(non_finite(stage, "discriminator loss", value));
            }
            total += value * scale;
            let grads = tape.backward(loss)?;
            self.disc_ab.params_mut().accumulate(&grads, &d_ab, scale);
            self.disc_ba.params_mut().accumulate(&grads, &d_ba, scale);
        }
        momentum_step(
            &mut self.disc_ab,
            &mut self.velocity_ab,
            cfg.lr_d,
            cfg.momentum_d,
        )?;
        momentum_step(
            &mut self.disc_ba,
            &mut self.velocity_ba,
            cfg.lr_d,
            cfg.momentum_d,
        )?;
        Ok(total)
    }

    /// Generator objective through the (already updated) discriminators,
    /// then the privatized step on each generator.
    fn generator_step(
        &mut self,
        passes: Vec<GenPass>,
        cfg: &RoundConfig,
        rng: &mut SeededRng,
        stage: &str,
    ) -> Result<f64> {
        let scale = 1.0 / passes.len() as f64;
        let mut total = 0.0;
        for mut pass in passes {
            let tape = &mut pass.tape;
            let d_ab = self.disc_ab.params().bind_frozen(tape);
            let d_ba = self.disc_ba.params().bind_frozen(tape);
            let logits_b = self.disc_ab.trace(tape, &d_ab, pass.fake_b)?;
            let logits_a = self.disc_ba.trace(tape, &d_ba, pass.fake_a)?;
            let parts = GeneratorLossParts {
                adv_ab: losses::adv_generator_on(tape, logits_b)?,
                adv_ba: losses::adv_generator_on(tape, logits_a)?,
                cyc_a: losses::l1_on(tape, pass.rec_a, pass.real_a)?,
                cyc_b: losses::l1_on(tape, pass.rec_b, pass.real_b)?,
                paired: if pass.paired {
                    Some((
                        losses::l1_on(tape, pass.fake_b, pass.real_b)?,
                        losses::l1_on(tape, pass.fake_a, pass.real_a)?,
                    ))
                } else {
                    None
                },
            };
            for (name, v) in [
                ("adv_ab", parts.adv_ab),
                ("adv_ba", parts.adv_ba),
                ("cyc_a", parts.cyc_a),
                ("cyc_b", parts.cyc_b),
            ] {
                let x = tape.value(v).item();
                if !x.is_finite() {
                    return Err(non_finite(stage, name, x));
                }
            }
            let loss = losses::compose_on(tape, parts, cfg.loss_weights)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(non_finite(stage, "generator loss", value));
            }
            total += value * scale;
            let grads = tape.backward(loss)?;
            self.gen_ab
                .params_mut()
                .accumulate(&grads, &pass.gen_ab, scale);
            self.gen_ba
                .params_mut()
                .accumulate(&grads, &pass.gen_ba, scale);
        }
        for gen in [&mut self.gen_ab, &mut self.gen_ba] {
            let grad = gen.params().grad_vector();
            let updated = dp_gradient_step(&gen.flatten_params(), &grad, &cfg.dp, cfg.lr_g, rng)?;
            gen.unflatten_params(&updated)?;
            gen.params_mut().zero_grad();
        }
        Ok(total)
    }

    /// One pass over `data` in a seeded order: for every minibatch, update the
    /// discriminators first and then the generators.
    pub fn train_epoch(
        &mut self,
        data: &ClientDataset,
        cfg: &RoundConfig,
        rng: &mut SeededRng,
        stage: &str,
    ) -> Result<EpochStats> {
        let mut items = data.items();
        if items.is_empty() {
            return Err(Error::InvalidArgument(
                "cannot train on an empty dataset".into(),
            ));
        }
        rng.shuffle(&mut items);
        let mut stats = EpochStats::default();
        let batches = items.len().div_ceil(cfg.batch_size);
        for batch in items.chunks(cfg.batch_size) {
            let passes = batch
                .iter()
                .map(|item| self.forward_generators(item))
                .collect::<Result<Vec<_>>>()?;
            stats.discriminator_loss +=
                self.discriminator_step(&passes, cfg, stage)? / batches as f64;
            stats.generator_loss += self.generator_step(passes, cfg, rng, stage)? / batches as f64;
        }
        Ok(stats)
    }
}

/// Randomness for the `epoch`-th local epoch ever run by `client_id`.
pub fn epoch_stream(seed: u64, client_id: usize, epoch: usize) -> SeededRng {
    SeededRng::derive(seed, &[STREAM_EPOCH, client_id as u64, epoch as u64])
}

#[derive(Clone, Debug)]
pub struct ClientState {
    pub id: usize,
    pub weight: f64,
    pub dataset: Arc<ClientDataset>,
    models: LocalModels,
    epochs_done: usize,
}

impl ClientState {
    pub fn new(
        id: usize,
        weight: f64,
        dataset: Arc<ClientDataset>,
        models: &ModelConfig,
        seed: u64,
    ) -> Result<Self> {
        if !(weight > 0.0 && weight <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "client {id} weight must be in (0,1], got {weight}"
            )));
        }
        if dataset.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "client {id} has no training data"
            )));
        }
        Ok(ClientState {
            id,
            weight,
            dataset,
            models: LocalModels::init(models, seed, id)?,
            epochs_done: 0,
        })
    }

    pub fn gen_ab(&self) -> &Generator {
        &self.models.gen_ab
    }

    pub fn gen_ba(&self) -> &Generator {
        &self.models.gen_ba
    }

    pub fn disc_ab(&self) -> &Discriminator {
        &self.models.disc_ab
    }

    pub fn disc_ba(&self) -> &Discriminator {
        &self.models.disc_ba
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }
}

/// What a client sends back: generator parameters only.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub gen_ab: ParamVector,
    pub gen_ba: ParamVector,
    pub stats: Vec<EpochStats>,
}

#[derive(Clone, Debug)]
pub struct ServerState {
    pub gen_ab: Generator,
    pub gen_ba: Generator,
    pub round: usize,
}

impl ServerState {
    pub fn new(models: &ModelConfig, seed: u64) -> Result<Self> {
        let init = LocalModels::init(models, seed, 0)?;
        Ok(ServerState {
            gen_ab: init.gen_ab,
            gen_ba: init.gen_ba,
            round: 0,
        })
    }
}

/// Copies the server generators into every client; discriminators stay put.
pub fn broadcast(server: &ServerState, clients: &mut [ClientState]) -> Result<()> {
    let (ab, ba) = (
        server.gen_ab.flatten_params(),
        server.gen_ba.flatten_params(),
    );
    for c in clients.iter_mut() {
        c.models.gen_ab.unflatten_params(&ab)?;
        c.models.gen_ba.unflatten_params(&ba)?;
    }
    Ok(())
}

/// Runs `cfg.local_epochs` epochs on the client's private data.
pub fn local_train(client: &mut ClientState, cfg: &RoundConfig, seed: u64) -> Result<ClientUpdate> {
    let mut stats = Vec::with_capacity(cfg.local_epochs);
    for _ in 0..cfg.local_epochs {
        let epoch = client.epochs_done;
        let mut rng = epoch_stream(seed, client.id, epoch);
        let stage = format!("client {} epoch {}", client.id, epoch + 1);
        stats.push(
            client
                .models
                .train_epoch(&client.dataset, cfg, &mut rng, &stage)?,
        );
        client.epochs_done += 1;
    }
    Ok(ClientUpdate {
        client_id: client.id,
        gen_ab: client.models.gen_ab.flatten_params(),
        gen_ba: client.models.gen_ba.flatten_params(),
        stats,
    })
}

/// Element-wise `Σ_k w_k·θ_k`, accumulated in update order.
pub fn fedavg_aggregate(updates: &[&ParamVector], weights: &[f64]) -> Result<ParamVector> {
    if updates.is_empty() || updates.len() != weights.len() {
        return Err(Error::InvalidArgument(format!(
            "need one weight per update, got {} updates and {} weights",
            updates.len(),
            weights.len()
        )));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "aggregation weights must be non-negative and sum to 1, got {weights:?} (sum {sum})"
        )));
    }
    for u in &updates[1..] {
        updates[0].ensure_same_layout(u)?;
    }
    let mut acc: Vec<f64> = updates[0].values().iter().map(|v| weights[0] * v).collect();
    for (u, w) in updates.iter().zip(weights).skip(1) {
        for (a, v) in acc.iter_mut().zip(u.values()) {
            *a += w * v;
        }
    }
    updates[0].with_values(acc)
}

/// Result of one federated round.
#[derive(Clone, Debug)]
pub struct RoundOutcome {
    pub round: usize,
    pub metrics: Option<[MetricsRecord; 2]>,
    pub client_stats: Vec<(usize, Vec<EpochStats>)>,
}

/// Broadcast, local training, aggregation and (when `test` is non-empty)
/// evaluation of the new server generators. `order` fixes the client
/// scheduling order; results never depend on it. On any client failure the
/// server and clients are left exactly as they were.
pub fn run_round(
    server: &mut ServerState,
    clients: &mut Vec<ClientState>,
    cfg: &RoundConfig,
    seed: u64,
    test: &[Sample],
    exec: Execution,
    order: Option<&[usize]>,
) -> Result<RoundOutcome> {
    if clients.is_empty() {
        return Err(Error::InvalidArgument(
            "a round needs at least one client".into(),
        ));
    }
    let weight_sum: f64 = clients.iter().map(|c| c.weight).sum();
    if (weight_sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "client weights must sum to 1, got {weight_sum}"
        )));
    }
    let mut staged: Vec<ClientState> = clients.clone();
    broadcast(server, &mut staged)?;

    let schedule: Vec<usize> = match order {
        Some(o) => {
            let mut sorted = o.to_vec();
            sorted.sort_unstable();
            if sorted != (0..staged.len()).collect::<Vec<_>>() {
                return Err(Error::InvalidArgument(format!(
                    "client order {o:?} is not a permutation"
                )));
            }
            o.to_vec()
        }
        None => (0..staged.len()).collect(),
    };
    let mut slots: Vec<Option<ClientState>> = staged.into_iter().map(Some).collect();
    let jobs: Vec<(usize, ClientState)> = schedule
        .iter()
        .map(|&i| (i, slots[i].take().expect("unique")))
        .collect();
    let results = exec.map(jobs, |(slot, mut client)| {
        local_train(&mut client, cfg, seed).map(|u| (slot, client, u))
    });
    let mut trained: Vec<Option<(ClientState, ClientUpdate)>> = vec![None; slots.len()];
    for r in results {
        let (slot, client, update) = r?;
        trained[slot] = Some((client, update));
    }
    let trained: Vec<(ClientState, ClientUpdate)> = trained
        .into_iter()
        .map(|t| t.expect("every slot trained"))
        .collect();

    let weights: Vec<f64> = trained.iter().map(|(c, _)| c.weight).collect();
    let ab: Vec<&ParamVector> = trained.iter().map(|(_, u)| &u.gen_ab).collect();
    let ba: Vec<&ParamVector> = trained.iter().map(|(_, u)| &u.gen_ba).collect();
    let new_ab = fedavg_aggregate(&ab, &weights)?;
    let new_ba = fedavg_aggregate(&ba, &weights)?;

    let mut next = server.clone();
    next.gen_ab.unflatten_params(&new_ab)?;
    next.gen_ba.unflatten_params(&new_ba)?;
    next.round += 1;
    let metrics = if test.is_empty() {
        None
    } else {
        Some(evaluate(
            &next.gen_ab,
            &next.gen_ba,
            test,
            next.round,
            exec,
        )?)
    };

    let client_stats = trained
        .iter()
        .map(|(c, u)| (c.id, u.stats.clone()))
        .collect();
    *clients = trained.into_iter().map(|(c, _)| c).collect();
    *server = next;
    Ok(RoundOutcome {
        round: server.round,
        metrics,
        client_stats,
    })
}

/// Centralized baseline: one trainer over pooled data, evaluated per epoch.
#[derive(Clone, Debug)]
pub struct CentralTrainer {
    models: LocalModels,
    dataset: Arc<ClientDataset>,
    epochs_done: usize,
    seed: u64,
}

impl CentralTrainer {
    pub fn new(dataset: Arc<ClientDataset>, models: &ModelConfig, seed: u64) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::InvalidArgument(
                "centralized training needs data".into(),
            ));
        }
        Ok(CentralTrainer {
            models: LocalModels::init(models, seed, 0)?,
            dataset,
            epochs_done: 0,
            seed,
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    pub fn gen_ab(&self) -> &Generator {
        &self.models.gen_ab
    }

    pub fn gen_ba(&self) -> &Generator {
        &self.models.gen_ba
    }

    pub fn train_epoch(&mut self, cfg: &RoundConfig) -> Result<EpochStats> {
        let mut rng = epoch_stream(self.seed, 0, self.epochs_done);
        let stage = format!("epoch {}", self.epochs_done + 1);
        let stats = self
            .models
            .train_epoch(&self.dataset, cfg, &mut rng, &stage)?;
        self.epochs_done += 1;
        Ok(stats)
    }
}

#[derive(Clone, Debug)]
pub struct CentralOutcome {
    pub gen_ab: Generator,
    pub gen_ba: Generator,
    pub metrics: Vec<[MetricsRecord; 2]>,
}

/// Trains for `epochs` epochs; emits one record per direction per epoch when
/// `test` is non-empty.
pub fn train_centralized(
    dataset: Arc<ClientDataset>,
    models: &ModelConfig,
    cfg: &RoundConfig,
    epochs: usize,
    seed: u64,
    test: &[Sample],
    exec: Execution,
) -> Result<CentralOutcome> {
    let mut trainer = CentralTrainer::new(dataset, models, seed)?;
    let mut metrics = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        trainer.train_epoch(cfg)?;
        if !test.is_empty() {
            metrics.push(evaluate(
                trainer.gen_ab(),
                trainer.gen_ba(),
                test,
                epoch,
                exec,
            )?);
        }
    }
    Ok(CentralOutcome {
        gen_ab: trainer.models.gen_ab,
        gen_ba: trainer.models.gen_ba,
        metrics,
    })
}
