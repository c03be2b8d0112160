use std::hint::black_box;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::Result;
use chamauth::biometric::{capture, embed_watermark, extract_watermark, gen_template, matches};
use chamauth::chameleon::{self, CollisionClaim};
use chamauth::group::{measure, OpCounter, PairingGroup, SystemParams};
use chamauth::protocol::{two_party_run, CostPhase, Initiator, ManualClock, PhaseCosts, Responder};
use chamauth::sim::World;
use clap::Args;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::Config;

/// Soft budget for one sign followed by one verify.
const SIGN_VERIFY_BUDGET: Duration = Duration::from_millis(50);

#[derive(Args, Debug, Clone)]
pub struct BenchArgs {
    /// Per-algorithm operation counts.
    #[arg(long)]
    pub table2: bool,
    /// Per-party, per-phase operation counts of a two-party run.
    #[arg(long)]
    pub table3: bool,
    /// Wall-clock timings on the selected backend.
    #[arg(long)]
    pub timing: bool,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub iterations: u64,
}

/// Counts of each chameleon algorithm, on a fresh key and message pair.
pub fn algorithm_costs<G: PairingGroup>(
    params: &SystemParams<G>,
    rng: &mut dyn RngCore,
) -> Result<[(&'static str, OpCounter); 4]> {
    let kp = chameleon::keygen(params, rng);
    let ((h, r), hash) = measure(|| chameleon::hash(params, kp.public(), b"anon-id", rng));
    let (_, check) = measure(|| chameleon::check(params, kp.public(), &h, b"anon-id", &r));
    let (r2, sign) = measure(|| chameleon::sign(params, kp.secret(), &h, b"avatar"));
    let r2 = r2?;
    let a = CollisionClaim::new(b"anon-id".to_vec(), r);
    let b = CollisionClaim::new(b"avatar".to_vec(), r2);
    let (ok, verify) = measure(|| chameleon::verify(params, kp.public(), &h, &a, &b));
    anyhow::ensure!(ok, "fresh collision failed to verify");
    Ok([
        ("hash", hash),
        ("check", check),
        ("sign", sign),
        ("verify", verify),
    ])
}

/// Phase costs of both parties in one honest two-party run.
pub fn session_costs<G: PairingGroup>(
    params: SystemParams<G>,
    seed: u64,
) -> Result<(PhaseCosts, PhaseCosts)> {
    let mut world = World::new(params, 2, seed)?;
    let (r1, r2) = (world.session_rng(), world.session_rng());
    let clock = ManualClock::new();
    let ctx = world.context(&clock, Default::default());
    let mut a = Initiator::new(ctx.clone(), world.players[0].creds.clone(), r1);
    let mut b = Responder::new(ctx, world.players[1].creds.clone(), r2);
    let out = two_party_run(&mut a, &mut b)?;
    anyhow::ensure!(
        out.verdict_a.accepted && out.verdict_b.accepted,
        "honest run was rejected"
    );
    Ok((a.costs(), b.costs()))
}

fn mean_ms(iterations: u64, mut f: impl FnMut()) -> f64 {
    let start = Instant::now();
    for _ in 0..iterations {
        f();
    }
    start.elapsed().as_secs_f64() * 1e3 / iterations as f64
}

fn timing<G: PairingGroup>(
    params: &SystemParams<G>,
    cfg: &Config,
    iterations: u64,
    rng: &mut ChaCha20Rng,
) -> Result<()> {
    let kp = chameleon::keygen(params, rng);
    let s = params.random_nonzero_scalar(rng);
    let p = params.exp_g1(params.g1(), &s);
    let (h, r) = chameleon::hash(params, kp.public(), b"anon-id", rng);
    let a = CollisionClaim::new(b"anon-id".to_vec(), r);
    let r2 = chameleon::sign(params, kp.secret(), &h, b"avatar")?;
    let b = CollisionClaim::new(b"avatar".to_vec(), r2);

    let ops: [(&str, f64); 6] = [
        (
            "e1",
            mean_ms(iterations, || {
                black_box(params.exp_g1(&p, &s));
            }),
        ),
        (
            "m1",
            mean_ms(iterations, || {
                black_box(params.mul_g1(&p, &p));
            }),
        ),
        (
            "pairing",
            mean_ms(iterations, || {
                black_box(params.pairing(&p, params.g2()));
            }),
        ),
        (
            "hash",
            mean_ms(iterations, || {
                black_box(chameleon::hash(params, kp.public(), b"anon-id", &mut *rng));
            }),
        ),
        (
            "sign",
            mean_ms(iterations, || {
                black_box(chameleon::sign(params, kp.secret(), &h, b"avatar").ok());
            }),
        ),
        (
            "verify",
            mean_ms(iterations, || {
                black_box(chameleon::verify(params, kp.public(), &h, &a, &b));
            }),
        ),
    ];
    for (op, ms) in ops {
        println!("timing op={op} mean_ms={ms:.4}");
    }

    let template = gen_template(rng.next_u64());
    let mut nonce = [0u8; 16];
    rng.fill_bytes(&mut nonce);
    let feature = capture(&template, cfg.noise, rng)?;
    let marked = embed_watermark(&feature, &nonce, b"salt")?;
    let steps = [
        (
            "match",
            mean_ms(iterations, || {
                black_box(matches(&marked, &template, cfg.threshold));
            }),
        ),
        (
            "extract",
            mean_ms(iterations, || {
                black_box(extract_watermark(&marked, b"salt").ok());
            }),
        ),
        ("verify", ops[5].1),
    ];
    for (step, ms) in steps {
        println!("timing step={step} mean_ms={ms:.4}");
    }

    let sv = ops[4].1 + ops[5].1;
    let budget = SIGN_VERIFY_BUDGET.as_secs_f64() * 1e3;
    println!(
        "soft sign_verify_ms={sv:.4} budget_ms={budget:.0} status={}",
        if sv < budget { "ok" } else { "warn" }
    );
    Ok(())
}

pub fn run<G: PairingGroup>(
    params: SystemParams<G>,
    cfg: &Config,
    args: &BenchArgs,
) -> Result<ExitCode> {
    let all = !(args.table2 || args.table3 || args.timing);
    let seed = cfg.seed.unwrap_or_else(|| rand::rngs::OsRng.next_u64());
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    println!("group={}", params.group_id());
    if all || args.table2 {
        for (name, c) in algorithm_costs(&params, &mut rng)? {
            println!("table2 algorithm={name} cost={}", c.exp_first());
        }
    }
    if all || args.table3 {
        let (a, b) = session_costs(params.clone(), seed)?;
        for (party, costs) in [("a", a), ("b", b)] {
            for phase in [CostPhase::Round1, CostPhase::Round2, CostPhase::Session] {
                println!(
                    "table3 party={party} phase={phase} cost={}",
                    costs.get(phase)
                );
            }
            println!("table3 party={party} phase=total cost={}", costs.total());
        }
    }
    if all || args.timing {
        timing(&params, cfg, args.iterations, &mut rng)?;
    }
    Ok(ExitCode::SUCCESS)
}
