//! On-disk state of the identity provider and the file formats the
//! commands exchange.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use chamauth::biometric::{BioTemplate, IrisCode};
use chamauth::chameleon::keyfile::{self, KeyFile};
use chamauth::chameleon::ChameleonKeyPair;
use chamauth::codec::{Reader, Writer};
use chamauth::group::{PairingGroup, SystemParams};
use chamauth::identity::{
    Idp, IdpSigningKey, IdpVerifyingKey, Ledger, MetaverseIdentityToken, Registry, VirtualIdentity,
};

pub const GROUP_FILE: &str = "group.txt";
pub const IDP_KEY_FILE: &str = "idp.key";
pub const IDP_PUB_FILE: &str = "idp.pub";
pub const LEDGER_FILE: &str = "ledger.bin";
pub const REGISTRY_FILE: &str = "registry.tsv";

pub struct DataDir {
    root: PathBuf,
}

impl DataDir {
    pub fn new(root: PathBuf) -> Self {
        DataDir { root }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn exists(&self) -> bool {
        self.path(IDP_KEY_FILE).exists()
    }

    /// Refuses a directory created for a different backend.
    fn check_group<G: PairingGroup>(&self, params: &SystemParams<G>) -> Result<()> {
        let stored = fs::read_to_string(self.path(GROUP_FILE))
            .with_context(|| format!("no identity provider in {}", self.root.display()))?;
        let want = params.group_id().to_string();
        if stored.trim() != want {
            bail!(
                "data directory holds a {} provider, not {want}",
                stored.trim()
            );
        }
        Ok(())
    }

    pub fn init<G: PairingGroup>(
        &self,
        params: &SystemParams<G>,
        key: &IdpSigningKey<G>,
        force: bool,
    ) -> Result<()> {
        if self.exists() && !force {
            bail!(
                "{} already holds an identity provider (use --force to replace it)",
                self.root.display()
            );
        }
        fs::create_dir_all(&self.root)?;
        for f in [LEDGER_FILE, REGISTRY_FILE] {
            let p = self.path(f);
            if p.exists() {
                fs::remove_file(p)?;
            }
        }
        fs::write(self.path(GROUP_FILE), format!("{}\n", params.group_id()))?;
        fs::write(
            self.path(IDP_KEY_FILE),
            hex::encode(params.encode_scalar(key.scalar())) + "\n",
        )?;
        fs::write(
            self.path(IDP_PUB_FILE),
            hex::encode(params.encode_g1(&key.verifying_key().0)) + "\n",
        )?;
        fs::write(self.path(REGISTRY_FILE), "")?;
        Ledger::open(&self.path(LEDGER_FILE))?;
        Ok(())
    }

    pub fn load_idp<G: PairingGroup>(&self, params: &SystemParams<G>) -> Result<Idp<G>> {
        self.check_group(params)?;
        let sk = read_hex(&self.path(IDP_KEY_FILE))?;
        let key = IdpSigningKey::from_scalar(params, params.decode_scalar(&sk)?)?;
        let ledger = self.open_ledger()?;
        let registry = Registry::from_text(&fs::read_to_string(self.path(REGISTRY_FILE))?)?;
        Ok(Idp::from_parts(params.clone(), key, ledger, registry)?)
    }

    pub fn save_registry(&self, registry: &Registry) -> Result<()> {
        let tmp = self.path("registry.tsv.tmp");
        fs::write(&tmp, registry.to_text())?;
        fs::rename(tmp, self.path(REGISTRY_FILE))?;
        Ok(())
    }

    /// What a verifier needs: the provider's public key and the ledger.
    pub fn load_public<G: PairingGroup>(
        &self,
        params: &SystemParams<G>,
    ) -> Result<(IdpVerifyingKey<G>, Ledger)> {
        self.check_group(params)?;
        let vk = params.decode_g1(&read_hex(&self.path(IDP_PUB_FILE))?)?;
        Ok((IdpVerifyingKey(vk), self.open_ledger()?))
    }

    fn open_ledger(&self) -> Result<Ledger> {
        let p = self.path(LEDGER_FILE);
        Ledger::open(&p).with_context(|| format!("opening {}", p.display()))
    }
}

fn read_hex(path: &Path) -> Result<Vec<u8>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    hex::decode(text.trim()).with_context(|| format!("{} is not hex", path.display()))
}

pub fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

pub fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn read_keypair<G: PairingGroup>(
    params: &SystemParams<G>,
    path: &Path,
) -> Result<ChameleonKeyPair<G>> {
    match keyfile::decode(params, &read(path)?)? {
        KeyFile::Secret(kp) => Ok(kp),
        KeyFile::Public(_) => bail!("{} is a public key file", path.display()),
    }
}

pub fn read_public_key<G: PairingGroup>(
    params: &SystemParams<G>,
    path: &Path,
) -> Result<chamauth::chameleon::PublicKey<G>> {
    Ok(*keyfile::decode(params, &read(path)?)?.public())
}

pub fn read_template(path: &Path) -> Result<BioTemplate> {
    let code = IrisCode::decode(&read(path)?)?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(BioTemplate::new(code, label))
}

pub fn read_mit<G: PairingGroup>(
    params: &SystemParams<G>,
    path: &Path,
) -> Result<MetaverseIdentityToken<G>> {
    Ok(MetaverseIdentityToken::from_bytes(params, &read(path)?)?)
}

pub fn encode_vid<G: PairingGroup>(params: &SystemParams<G>, vid: &VirtualIdentity<G>) -> Vec<u8> {
    let mut w = Writer::new();
    vid.encode(params, &mut w);
    w.finish()
}

pub fn read_vid<G: PairingGroup>(
    params: &SystemParams<G>,
    path: &Path,
) -> Result<VirtualIdentity<G>> {
    let bytes = read(path)?;
    let mut r = Reader::new(&bytes);
    let vid = VirtualIdentity::decode(params, &mut r)?;
    r.finish()?;
    Ok(vid)
}
