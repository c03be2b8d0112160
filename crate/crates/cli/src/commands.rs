use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use chamauth::biometric::{gen_template, simulate, SimConfig};
use chamauth::chameleon::{keyfile, keygen as cham_keygen};
use chamauth::group::{PairingGroup, SystemParams};
use chamauth::identity::{create_vid, sha256, AvatarInfo, IdpSigningKey, MetaverseIdentityToken};
use chamauth::tracing::{TraceReason, TraceRequest, Tracer};
use rand::RngCore;

use crate::store;
use crate::Config;

fn default_pub_path(out: &Path) -> PathBuf {
    out.with_extension("pub")
}

pub fn keygen<G: PairingGroup>(
    params: &SystemParams<G>,
    cfg: &Config,
    out: &Path,
    pub_out: Option<PathBuf>,
) -> Result<ExitCode> {
    let pub_out = pub_out.unwrap_or_else(|| default_pub_path(out));
    if pub_out == out {
        bail!("public key path must differ from {}", out.display());
    }
    let mut rng = cfg.key_rng("keygen")?;
    let kp = cham_keygen(params, &mut rng);
    store::write(out, &keyfile::encode_secret(params, &kp))?;
    store::write(&pub_out, &keyfile::encode_public(params, kp.public()))?;
    println!("secret_key={}", out.display());
    println!("public_key={}", pub_out.display());
    println!(
        "public_key_digest={}",
        hex::encode(sha256(&kp.public().to_bytes(params)))
    );
    Ok(ExitCode::SUCCESS)
}

pub fn idp_init<G: PairingGroup>(
    params: &SystemParams<G>,
    cfg: &Config,
    force: bool,
) -> Result<ExitCode> {
    let mut rng = cfg.key_rng("idp-init")?;
    let key = IdpSigningKey::generate(params, &mut rng);
    let dir = cfg.data();
    dir.init(params, &key, force)?;
    println!("data_dir={}", cfg.data_dir.display());
    println!("group={}", params.group_id());
    println!(
        "idp_public_key={}",
        hex::encode(params.encode_g1(&key.verifying_key().0))
    );
    Ok(ExitCode::SUCCESS)
}

pub fn idp_register<G: PairingGroup>(
    params: &SystemParams<G>,
    cfg: &Config,
    real_id: &str,
    anon_id: &str,
    pubkey: &Path,
    template: &Path,
    out: Option<PathBuf>,
) -> Result<ExitCode> {
    let dir = cfg.data();
    let mut idp = dir.load_idp(params)?;
    let pk = store::read_public_key(params, pubkey)?;
    let tpl = store::read_template(template)?;
    let mut rng = cfg.rng(&format!("register:{anon_id}"));
    let mit = idp.register(real_id.as_bytes(), anon_id.as_bytes(), &tpl, &pk, &mut rng)?;
    dir.save_registry(idp.registry())?;
    let digest = hex::encode(mit.digest(params));
    let out = out.unwrap_or_else(|| dir.path(&format!("{digest}.mit")));
    store::write(&out, &mit.to_bytes(params))?;
    println!("mit_digest={digest}");
    println!("mit={}", out.display());
    println!("ledger_index={}", idp.ledger().len() - 1);
    Ok(ExitCode::SUCCESS)
}

pub fn idp_show<G: PairingGroup>(params: &SystemParams<G>, cfg: &Config) -> Result<ExitCode> {
    let idp = cfg.data().load_idp(params)?;
    idp.ledger().verify_chain()?;
    println!("group={}", params.group_id());
    println!("entries={}", idp.ledger().len());
    for e in idp.ledger().entries() {
        let mit = MetaverseIdentityToken::from_bytes(params, &e.payload)?;
        let digest = sha256(&e.payload);
        let real = idp
            .registry()
            .lookup(&digest)
            .map(|r| String::from_utf8_lossy(r).into_owned())
            .unwrap_or_else(|| "-".into());
        println!(
            "entry index={} mit_digest={} anon_id={} real_id={} idp_sig_valid={}",
            e.index,
            hex::encode(digest),
            String::from_utf8_lossy(&mit.anon_id),
            real,
            mit.signature_valid(params, &idp.verifying_key())
        );
    }
    println!("chain=ok");
    Ok(ExitCode::SUCCESS)
}

pub fn bio_template(subject: u64, out: &Path) -> Result<ExitCode> {
    let t = gen_template(subject);
    store::write(out, &t.code.encode())?;
    println!("template={}", out.display());
    println!("subject={subject}");
    Ok(ExitCode::SUCCESS)
}

pub fn bio_simulate(cfg: &Config, trials: usize, thresholds: Vec<f64>) -> Result<ExitCode> {
    let mut thresholds = if thresholds.is_empty() {
        let mut t = vec![0.20, 0.25, 0.30, 0.35, 0.40, 0.45];
        t.push(cfg.threshold);
        t
    } else {
        thresholds
    };
    if let Some(t) = thresholds.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        bail!("threshold {t} is outside (0, 1)");
    }
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let seed = cfg.seed.unwrap_or_else(|| rand::rngs::OsRng.next_u64());
    let report = simulate(&SimConfig {
        trials,
        noise: cfg.noise,
        thresholds,
        seed,
    })?;
    println!(
        "trials={} noise={:.2} seed={seed}",
        report.trials, cfg.noise
    );
    for row in &report.rows {
        println!(
            "rate threshold={:.2} frr_native={:.4} frr_watermarked={:.4} far_native={:.4} far_watermarked={:.4} max_gap={:.4}",
            row.threshold,
            row.frr_native,
            row.frr_watermarked,
            row.far_native,
            row.far_watermarked,
            row.max_gap()
        );
    }
    println!("watermark_roundtrip_failures={}", report.roundtrip_failures);
    println!("max_embed_flips={}", report.max_embed_flips);
    Ok(ExitCode::SUCCESS)
}

pub fn avatar_create<G: PairingGroup>(
    params: &SystemParams<G>,
    key: &Path,
    mit: &Path,
    name: &str,
    appearance: &str,
    out: &Path,
) -> Result<ExitCode> {
    let kp = store::read_keypair(params, key)?;
    let mit = store::read_mit(params, mit)?;
    if *kp.public() != mit.pk {
        bail!("{} does not belong to this token", key.display());
    }
    let info = AvatarInfo {
        display_name: name.to_string(),
        appearance: sha256(appearance.as_bytes()),
    };
    let vid = create_vid(params, kp.secret(), &mit, &info.encode())?;
    if !mit.accepts(params, &vid.claim) {
        bail!("created virtual identity does not verify");
    }
    store::write(out, &store::encode_vid(params, &vid))?;
    println!("vid={}", out.display());
    println!("display_name={name}");
    Ok(ExitCode::SUCCESS)
}

pub fn trace<G: PairingGroup>(
    params: &SystemParams<G>,
    cfg: &Config,
    request: &Path,
) -> Result<ExitCode> {
    let req = TraceRequest::from_bytes(params, &store::read(request)?)?;
    let idp = cfg.data().load_idp(params)?;
    let mut tracer = Tracer::new(&idp);
    tracer.threshold = cfg.threshold;
    let verdict = tracer.trace(&req);
    let disclosed = verdict.reason() == TraceReason::Disclosed;
    let real_id = verdict.real_id();
    let out = serde_json::json!({
        "reason": verdict.reason().to_string(),
        "disclosed": disclosed,
        "real_id": real_id.map(|r| String::from_utf8_lossy(r).into_owned()),
        "real_id_hex": real_id.map(hex::encode),
        "reporter": req.reporter,
    });
    println!("{out}");
    Ok(if disclosed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pub_path_replaces_extension() {
        assert_eq!(
            default_pub_path(Path::new("a/alice.key")),
            Path::new("a/alice.pub")
        );
        assert_eq!(default_pub_path(Path::new("bob")), Path::new("bob.pub"));
    }
}
