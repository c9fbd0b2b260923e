//! `bacip`: operator command line for a registry node.
//!
//! Exit codes are a stable contract: 0 on success (and only for a `valid`
//! verification), 1 on a domain failure, 2 on a usage or configuration
//! error.

use std::fs;
use std::io::{self, BufRead, Read, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use chrono::{DateTime, Utc};
use clap::{Parser, Subcommand, ValueEnum};
use rand::rngs::OsRng;
use serde::Serialize;
use serde_json::json;

use bacip_core::canonical::canonical_bytes_of;
use bacip_core::consensus::{run_simulation, Scenario};
use bacip_core::credential::{validate_issue_request, CredentialId, Did};
use bacip_core::crypto::{generate_keypair, Algorithm};
use bacip_core::ledger::{AuditFilter, EventName, Genesis, InvalidReason, LedgerState, Participant, PermissionBits};
use bacip_core::node::{ConsentAction, NodeError, RegistryNode};
use bacip_gateway::api::status_by_id;
use bacip_gateway::config::DEFAULT_DATA_DIR;
use bacip_gateway::{mint_token, Claims, ConfigError, Gateway, NodeConfig, Role};

const PASSPHRASE_ENV: &str = "BACIP_KEYSTORE_PASSPHRASE";
const LOCAL_CHAIN_ID: &str = "bacip-local";

#[derive(Parser)]
#[command(name = "bacip", version, about = "Operate a BACIP credential registry node")]
struct Cli {
    /// Node configuration (TOML). Relative paths inside it resolve against its directory.
    #[arg(long, global = true, env = "BACIP_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides the keystore location.
    #[arg(long, global = true)]
    keystore: Option<PathBuf>,
    /// Directory holding node files when no config is given.
    #[arg(long, global = true, env = "BACIP_DATA_DIR", default_value = DEFAULT_DATA_DIR)]
    data_dir: PathBuf,
    /// Print JSON in canonical form instead of pretty-printed.
    #[arg(long, global = true)]
    canonical: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a signing key and register it in the genesis document.
    Keygen {
        #[arg(long, value_parser = parse_algorithm)]
        alg: Algorithm,
        /// Key URI, e.g. `did:example:456#key-1`.
        #[arg(long)]
        key_id: String,
        /// Controller DID; defaults to the key id without its fragment.
        #[arg(long)]
        did: Option<Did>,
        /// Issuer URI the key may sign credentials for.
        #[arg(long)]
        issuer_uri: Option<String>,
        /// Bearer-token subject alias.
        #[arg(long)]
        subject: Option<String>,
        /// Comma-separated `issue,revoke,verify,admin` or a bit mask.
        #[arg(long, value_parser = parse_permissions)]
        permissions: Option<PermissionBits>,
    },
    /// Issue a credential from a request body (`-` reads stdin).
    Issue {
        request: PathBuf,
        /// Issuing DID; defaults to the participant matching the request's issuer.
        #[arg(long = "as")]
        issuer: Option<Did>,
        /// Write the document here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Store the payload in the clear.
        #[arg(long)]
        no_seal: bool,
    },
    /// Print the status of a document file or a registered credential id.
    Verify {
        #[arg(required_unless_present = "id")]
        file: Option<PathBuf>,
        #[arg(long, conflicts_with = "file")]
        id: Option<CredentialId>,
    },
    /// Revoke a registered credential.
    Revoke {
        id: CredentialId,
        /// Revoking DID; defaults to the credential's issuer.
        #[arg(long = "as")]
        revoker: Option<Did>,
    },
    /// Record a consent decision for a data subject.
    Consent {
        action: ConsentArg,
        #[arg(long)]
        subject: Did,
    },
    /// Run the HTTP gateway until interrupted.
    Serve {
        #[arg(long)]
        bind: Option<SocketAddr>,
    },
    /// Run a consensus scenario in the network simulator.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Write the full JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Query the audit trail.
    Audit {
        #[arg(long)]
        event: Option<EventName>,
        #[arg(long)]
        subject: Option<String>,
        #[arg(long)]
        from_height: Option<u64>,
        #[arg(long)]
        to_height: Option<u64>,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Print the inclusion proof of a credential and the anchor it verifies against.
    AnchorProof { id: CredentialId },
    /// Mint a bearer token for a registered subject whose key is held locally.
    Token {
        /// Subject alias or DID.
        #[arg(long)]
        subject: String,
        #[arg(long)]
        role: Role,
        #[arg(long)]
        name: Option<String>,
        /// Lifetime in seconds.
        #[arg(long, default_value_t = bacip_gateway::auth::DEFAULT_TOKEN_LIFETIME)]
        lifetime: i64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ConsentArg {
    Give,
    Withdraw,
    Delete,
}

impl From<ConsentArg> for ConsentAction {
    fn from(a: ConsentArg) -> Self {
        match a {
            ConsentArg::Give => ConsentAction::Give,
            ConsentArg::Withdraw => ConsentAction::Withdraw,
            ConsentArg::Delete => ConsentAction::Delete,
        }
    }
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: bacip_core::crypto::UnsupportedAlgorithm| e.to_string())
}

fn parse_permissions(s: &str) -> Result<PermissionBits, String> {
    if let Ok(n) = s.parse::<u32>() {
        return PermissionBits::from_bits(n).ok_or_else(|| format!("{n} sets unknown permission bits"));
    }
    s.split(',').filter(|p| !p.is_empty()).try_fold(PermissionBits::NONE, |acc, p| {
        let bit = match p.trim().to_ascii_lowercase().as_str() {
            "issue" => PermissionBits::ISSUE,
            "revoke" => PermissionBits::REVOKE,
            "verify" => PermissionBits::VERIFY,
            "admin" => PermissionBits::ADMIN,
            other => return Err(format!("unknown permission `{other}`")),
        };
        Ok(acc | bit)
    })
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn domain(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }

    fn usage(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::usage(e.to_string())
    }
}

impl From<NodeError> for Failure {
    fn from(e: NodeError) -> Self {
        Failure::domain(e.to_string())
    }
}

type Outcome = Result<ExitCode, Failure>;

struct Context {
    config: NodeConfig,
    canonical: bool,
}

impl Context {
    fn load(cli: &Cli) -> Result<Self, Failure> {
        let mut config = NodeConfig::load(cli.config.as_deref(), &cli.data_dir)?;
        if let Some(k) = &cli.keystore {
            config.keystore_path = k.clone();
        }
        Ok(Context {
            config,
            canonical: cli.canonical,
        })
    }

    fn node(&self) -> Result<Arc<RegistryNode>, Failure> {
        Ok(self.config.open_node(&passphrase()?)?)
    }

    fn render<T: Serialize>(&self, value: &T) -> String {
        if self.canonical {
            String::from_utf8(canonical_bytes_of(value)).expect("canonical JSON is UTF-8")
        } else {
            serde_json::to_string_pretty(value).expect("output serializes")
        }
    }

    fn print<T: Serialize>(&self, value: &T) {
        println!("{}", self.render(value));
    }
}

/// From the environment, otherwise one line from stdin.
fn passphrase() -> Result<String, Failure> {
    if let Ok(p) = std::env::var(PASSPHRASE_ENV) {
        return Ok(p);
    }
    eprint!("keystore passphrase: ");
    let _ = io::stderr().flush();
    let mut line = String::new();
    io::stdin()
        .lock()
        .read_line(&mut line)
        .map_err(|e| Failure::usage(format!("reading passphrase: {e}")))?;
    let line = line.trim_end_matches(['\r', '\n']).to_string();
    if line.is_empty() {
        return Err(Failure::usage(format!("no passphrase; set {PASSPHRASE_ENV}")));
    }
    Ok(line)
}

fn read_input(path: &Path) -> Result<Vec<u8>, Failure> {
    if path.as_os_str() == "-" {
        let mut buf = Vec::new();
        io::stdin()
            .read_to_end(&mut buf)
            .map_err(|e| Failure::usage(format!("reading stdin: {e}")))?;
        return Ok(buf);
    }
    fs::read(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))
}

fn write_output(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, format!("{text}\n")).map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))
}

fn now() -> DateTime<Utc> {
    Utc::now()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    if let Command::Simulate { scenario, report } = &cli.command {
        return simulate(cli.canonical, scenario, report.as_deref());
    }
    let ctx = Context::load(cli)?;
    match &cli.command {
        Command::Keygen {
            alg,
            key_id,
            did,
            issuer_uri,
            subject,
            permissions,
        } => keygen(&ctx, *alg, key_id, did.clone(), issuer_uri.clone(), subject.clone(), *permissions),
        Command::Issue {
            request,
            issuer,
            out,
            no_seal,
        } => issue(&ctx, request, issuer.as_ref(), out.as_deref(), !no_seal && ctx.config.seal_payloads),
        Command::Verify { file, id } => verify(&ctx, file.as_deref(), id.as_ref()),
        Command::Revoke { id, revoker } => revoke(&ctx, id, revoker.as_ref()),
        Command::Consent { action, subject } => consent(&ctx, subject, (*action).into()),
        Command::Serve { bind } => serve(&ctx, *bind),
        Command::Audit {
            event,
            subject,
            from_height,
            to_height,
            limit,
        } => audit(
            &ctx,
            AuditFilter {
                event_name: *event,
                subject: subject.clone(),
                from_height: *from_height,
                to_height: *to_height,
            },
            *limit,
        ),
        Command::AnchorProof { id } => anchor_proof(&ctx, id),
        Command::Token {
            subject,
            role,
            name,
            lifetime,
        } => token(&ctx, subject, *role, name.as_deref(), *lifetime),
        Command::Simulate { .. } => unreachable!("handled above"),
    }
}

fn keygen(
    ctx: &Context,
    alg: Algorithm,
    key_id: &str,
    did: Option<Did>,
    issuer_uri: Option<String>,
    subject: Option<String>,
    permissions: Option<PermissionBits>,
) -> Outcome {
    let cfg = &ctx.config;
    if cfg.ledger_started() {
        return Err(Failure::domain(
            "the ledger has started; the key registry is fixed and new keys cannot be registered",
        ));
    }
    let did = match did {
        Some(d) => d,
        None => {
            let controller = key_id.split('#').next().unwrap_or(key_id);
            controller
                .parse()
                .map_err(|e| Failure::usage(format!("cannot derive a DID from key id `{key_id}`: {e}; pass --did")))?
        }
    };
    let mut keystore = cfg.open_keystore(&passphrase()?)?;
    if keystore.contains(key_id) {
        return Err(Failure::domain(format!("key id `{key_id}` already exists in the keystore")));
    }
    let key = generate_keypair(alg, key_id.to_string(), &mut OsRng);

    let mut genesis = cfg.read_genesis()?.unwrap_or_else(|| Genesis::new(LOCAL_CHAIN_ID, did.clone()));
    let mut participant = Participant::from_keypair(did.clone(), &key, issuer_uri.clone());
    participant.subject = subject;
    genesis.participants.push(participant);
    if let Some(bits) = permissions.filter(|b| *b != PermissionBits::NONE) {
        *genesis.roles.entry(did.clone()).or_default() |= bits.bits();
    }
    LedgerState::from_genesis(&genesis).map_err(|e| Failure::domain(format!("genesis would be invalid: {e}")))?;

    keystore
        .insert_keypair(&key, issuer_uri, &mut OsRng)
        .map_err(|e| Failure::domain(e.to_string()))?;
    keystore.save().map_err(|e| Failure::usage(e.to_string()))?;
    cfg.write_genesis(&genesis)?;
    eprintln!("registered {key_id} ({}) for {did}", alg.name());
    println!("{}", STANDARD.encode(key.public_key()));
    Ok(ExitCode::SUCCESS)
}

/// The participant DID that controls `issuer`, by DID or issuer URI.
fn issuing_did(genesis: &Genesis, issuer: &str) -> Option<Did> {
    genesis
        .participants
        .iter()
        .find(|p| p.did.as_str() == issuer || p.issuer_uri.as_deref() == Some(issuer))
        .map(|p| p.did.clone())
}

fn issue(ctx: &Context, request: &Path, issuer: Option<&Did>, out: Option<&Path>, seal: bool) -> Outcome {
    let raw = read_input(request)?;
    let request = validate_issue_request(&raw).map_err(|e| Failure::domain(e.to_string()))?;
    let node = ctx.node()?;
    let did = match issuer {
        Some(d) => d.clone(),
        None => issuing_did(node.genesis(), &request.issuer)
            .ok_or_else(|| Failure::domain(format!("no registered participant issues as `{}`; pass --as", request.issuer)))?,
    };
    let issued = node.issue(request, &did, seal, now())?;
    let text = ctx.render(&issued.document);
    eprintln!(
        "issued {} at height {} (tx {})",
        issued.document.id.as_ref().map(ToString::to_string).unwrap_or_default(),
        issued.height,
        issued.tx_id
    );
    match out {
        Some(path) => write_output(path, &text)?,
        None => println!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn verify(ctx: &Context, file: Option<&Path>, id: Option<&CredentialId>) -> Outcome {
    let node = ctx.node()?;
    let status = match (file, id) {
        (_, Some(id)) => status_by_id(&node, &node.state(), id, now()).to_string(),
        (Some(path), None) => node.verify_json(&read_input(path)?, now()).as_str().to_string(),
        (None, None) => return Err(Failure::usage("pass a document file or --id")),
    };
    println!("{status}");
    Ok(if status == "valid" { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn revoke(ctx: &Context, id: &CredentialId, revoker: Option<&Did>) -> Outcome {
    let node = ctx.node()?;
    let state = node.state();
    let record = state
        .credential(id)
        .ok_or_else(|| Failure::domain(format!("no credential {id}")))?;
    let revoker = revoker.cloned().unwrap_or_else(|| record.issuer.clone());
    let body = match node.revoke(id, &revoker, now()) {
        Ok(outcome) => json!({"credentialId": id, "revoked": true, "alreadyRevoked": false, "txId": outcome.tx_id}),
        Err(NodeError::Rejected(InvalidReason::AlreadyRevoked)) => {
            json!({"credentialId": id, "revoked": true, "alreadyRevoked": true})
        }
        Err(e) => return Err(e.into()),
    };
    ctx.print(&body);
    Ok(ExitCode::SUCCESS)
}

fn consent(ctx: &Context, subject: &Did, action: ConsentAction) -> Outcome {
    let node = ctx.node()?;
    let outcome = node.consent(subject, action, now())?;
    ctx.print(&json!({
        "subject": subject,
        "consentGiven": node.state().consent(subject),
        "txId": outcome.tx_id,
    }));
    Ok(ExitCode::SUCCESS)
}

fn serve(ctx: &Context, bind: Option<SocketAddr>) -> Outcome {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(io::stderr)
        .try_init();
    let addr = match bind {
        Some(a) => a,
        None => ctx
            .config
            .gateway_bind
            .parse()
            .map_err(|e| Failure::usage(format!("gateway-bind `{}`: {e}", ctx.config.gateway_bind)))?,
    };
    let node = ctx.node()?;
    let gateway = Arc::new(Gateway::new(node).with_sealing(ctx.config.seal_payloads));
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::usage(e.to_string()))?;
    runtime
        .block_on(bacip_gateway::serve(gateway, addr))
        .map_err(|e| Failure::usage(format!("serving on {addr}: {e}")))?;
    Ok(ExitCode::SUCCESS)
}

fn simulate(canonical: bool, scenario: &Path, report_path: Option<&Path>) -> Outcome {
    let raw = read_input(scenario)?;
    let text = String::from_utf8(raw).map_err(|_| Failure::usage("scenario is not UTF-8"))?;
    let scenario = Scenario::from_json(&text).map_err(|e| Failure::usage(format!("scenario: {e}")))?;
    let report = run_simulation(&scenario).map_err(|e| Failure::usage(format!("scenario: {e}")))?;
    if let Some(path) = report_path {
        let body = if canonical {
            String::from_utf8(canonical_bytes_of(&report)).expect("canonical JSON is UTF-8")
        } else {
            serde_json::to_string_pretty(&report).expect("report serializes")
        };
        write_output(path, &body)?;
    }
    println!(
        "n={} f={} quorum={} byzantine={} heights={}/{} ticks={} safetyViolations={} honestEquivocations={} validityViolations={}",
        report.n,
        report.f,
        report.quorum,
        report.byzantine.len(),
        report.heights_finalized,
        report.target_height,
        report.ticks,
        report.safety_violations,
        report.honest_equivocations,
        report.validity_violations,
    );
    let safe = report.safety_violations == 0 && report.honest_equivocations == 0 && report.validity_violations == 0;
    Ok(if safe { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn audit(ctx: &Context, filter: AuditFilter, limit: Option<usize>) -> Outcome {
    let node = ctx.node()?;
    let events = node.state().audit_query(&filter);
    let total = events.len();
    let shown: Vec<_> = events.into_iter().take(limit.unwrap_or(usize::MAX)).collect();
    ctx.print(&json!({"total": total, "events": shown}));
    Ok(ExitCode::SUCCESS)
}

fn anchor_proof(ctx: &Context, id: &CredentialId) -> Outcome {
    let node = ctx.node()?;
    let (proof, anchor) = node.inclusion_proof(id)?;
    ctx.print(&json!({"proof": proof, "anchor": anchor}));
    Ok(ExitCode::SUCCESS)
}

fn token(ctx: &Context, subject: &str, role: Role, name: Option<&str>, lifetime: i64) -> Outcome {
    let cfg = &ctx.config;
    let genesis = cfg.read_genesis()?.ok_or_else(|| ConfigError::NoGenesis(cfg.genesis_path.clone()))?;
    let state = LedgerState::from_genesis(&genesis).map_err(|e| Failure::usage(e.to_string()))?;
    let mut keystore = cfg.open_keystore(&passphrase()?)?;
    let key_id = state
        .keys_for_subject(subject)
        .filter(|k| k.algorithm == Algorithm::Es256)
        .map(|k| k.key_id.clone())
        .find(|id| keystore.contains(id))
        .ok_or_else(|| Failure::domain(format!("no local ES256 key registered for subject `{subject}`")))?;
    let key = keystore.keypair(&key_id).map_err(|e| Failure::domain(e.to_string()))?;
    let iat = now().timestamp();
    let mut claims = Claims::new(subject, name.unwrap_or(subject), role, iat);
    claims.exp = iat + lifetime;
    let token = mint_token(&claims, &key).map_err(|e| Failure::domain(e.to_string()))?;
    println!("{token}");
    Ok(ExitCode::SUCCESS)
}
