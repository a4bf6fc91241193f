//! Synthetic seed prompts for the six intents.
//!
//! Each intent has ten sentence templates; slots are filled from pools that
//! cover the usual 5G core conventions: locations given as a city, region,
//! geographic coordinates or data center, and network entities identified by
//! name, short-hand, instance number, alphanumeric, hexadecimal or UUID
//! identifiers. Generation is fully determined by the RNG seed.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::augment::{substitute_where, PARAPHRASE_SYNONYMS, VARIABILITY_SYNONYMS};
use super::builtin::INTENTS;
use super::{generate_variants, Corpus, LabeledPrompt, Result, RuleBasedRewriter, Variant};
use crate::baseline::ChatModel;

/// Seed prompts generated per intent.
pub const SEEDS_PER_INTENT: usize = 30;

/// RNG seed used for the committed corpus.
pub const SHIPPED_SEED: u64 = 2024;

const CITIES: &[&str] = &[
    "Toronto",
    "downtown Manhattan",
    "Vancouver",
    "London, Ontario",
    "Montreal",
    "Calgary",
    "Chicago",
    "Berlin",
    "Ottawa",
    "Halifax",
    "Seattle",
    "Dallas",
    "Winnipeg",
    "Edmonton",
    "Quebec City",
    "Boston",
    "Denver",
    "Atlanta",
    "Phoenix",
    "Miami",
    "Madrid",
    "Lisbon",
    "Stockholm",
    "Helsinki",
    "Warsaw",
    "Vienna",
    "Dublin",
    "Tokyo",
    "Osaka",
    "Seoul",
    "Singapore",
    "Sydney",
    "Auckland",
    "Nairobi",
    "Lagos",
    "Cairo",
    "Sao Paulo",
    "Bogota",
    "Lima",
    "Mexico City",
    "Kitchener",
    "Regina",
    "Saskatoon",
    "Victoria",
    "Hamilton",
    "Windsor",
    "Sudbury",
    "Moncton",
    "St. John's",
    "Fredericton",
];

const REGIONS: &[&str] = &[
    "the Northeast region",
    "region us-east-2",
    "the Prairies region",
    "Western Europe",
    "the Greater Toronto Area",
    "the Pacific Northwest",
    "region ca-central-1",
    "Southern Ontario",
    "the Midwest",
    "region eu-west-3",
    "Northern Quebec",
    "the Atlantic provinces",
    "Scandinavia",
    "the Gulf Coast",
    "region ap-southeast-1",
    "the Iberian Peninsula",
    "Central Europe",
    "the Rocky Mountain region",
    "East Africa",
    "the Southwest",
    "region us-west-1",
    "New England",
];

const DC_PREFIXES: &[&str] = &[
    "data center",
    "edge site",
    "colocation facility",
    "central office",
    "point of presence",
];

const NF_NAMES: &[&str] = &[
    "the access and mobility management function",
    "the session management function",
    "the user plane function",
    "the network repository function",
    "the policy control function",
    "the authentication server function",
    "the unified data management function",
    "the network slice selection function",
    "the network exposure function",
];

const NF_SHORT: &[&str] = &[
    "the AMF", "the SMF", "the UPF", "the NRF", "the PCF", "the AUSF", "the UDM", "the NSSF", "the NEF",
];

const NF_KINDS: &[&str] = &["AMF", "SMF", "UPF", "NRF", "PCF", "NSSF", "AUSF", "UDM", "NEF"];

const SLICES: &[&str] = &[
    "eMBB slice",
    "URLLC slice",
    "mMTC slice",
    "video streaming slice",
    "IoT slice",
    "public safety slice",
    "automotive V2X slice",
    "smart factory slice",
    "gaming slice",
    "telemedicine slice",
    "enterprise slice",
    "fixed wireless access slice",
    "drone control slice",
    "smart grid slice",
];

const QOS: &[&str] = &[
    "gold-tier QoS",
    "ultra-reliable low latency",
    "premium video",
    "mission-critical push-to-talk",
    "best-effort",
    "real-time gaming",
    "conversational voice",
    "industrial automation",
    "augmented reality",
    "remote surgery",
    "live broadcast",
    "silver-tier QoS",
    "bronze-tier QoS",
];

const KPI_FORMS: &[&str] = &[
    "latency below {n} ms",
    "throughput of at least {n} Mbps",
    "packet loss under 0.0{n}%",
    "uptime of 99.9{n}%",
    "jitter under {n} ms",
    "end-to-end delay under {n} ms",
    "a downlink rate of {n} Mbps",
    "an uplink rate of {n} Mbps",
    "at most {n} dropped calls per hour",
    "a connection setup time under {n} ms",
];

const USER_FORMS: &[&str] = &[
    "{n} subscribers",
    "{n} IoT devices",
    "{n} concurrent sessions",
    "{n} enterprise users",
    "{n} connected sensors",
    "{n} mobile users",
    "{n} smartphones",
    "{n} vehicles",
    "{n} cameras",
];

const FREQUENCY_FORMS: &[&str] = &[
    "every {n} minutes",
    "hourly",
    "every day at {h}:00",
    "every {n} seconds",
    "weekly",
    "every {n} hours",
    "once a day",
    "twice a day",
    "every morning",
    "at the end of every shift",
    "monthly",
];

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str]) -> &'a str {
    pool.choose(rng).copied().unwrap_or_default()
}

fn location(rng: &mut ChaCha8Rng, variety: usize) -> String {
    match variety % 4 {
        0 => pick(rng, CITIES).to_string(),
        1 => pick(rng, REGIONS).to_string(),
        2 => {
            let lat: f64 = rng.gen_range(-60.0..70.0);
            let lon: f64 = rng.gen_range(-170.0..170.0);
            match rng.gen_range(0..3) {
                0 => format!("coordinates {lat:.4}, {lon:.4}"),
                1 => format!("latitude {lat:.4}, longitude {lon:.4}"),
                _ => format!("GPS position {lat:.3}, {lon:.3}"),
            }
        }
        _ => {
            let prefix = pick(rng, DC_PREFIXES);
            let code: String = (0..3).map(|_| rng.gen_range(b'A'..=b'Z') as char).collect();
            format!("{prefix} {code}-{}", rng.gen_range(1..40))
        }
    }
}

fn numbered(rng: &mut ChaCha8Rng, forms: &[&str]) -> String {
    let form = pick(rng, forms);
    let n = match rng.gen_range(0..3) {
        0 => rng.gen_range(2..10),
        1 => rng.gen_range(10..100),
        _ => rng.gen_range(100..5000),
    };
    form.replace("{n}", &n.to_string())
        .replace("{h}", &format!("{:02}", rng.gen_range(0..24)))
}

fn uuid(rng: &mut ChaCha8Rng) -> String {
    let mut bytes = [0u8; 16];
    rng.fill_bytes(&mut bytes);
    uuid::Builder::from_random_bytes(bytes).into_uuid().to_string()
}

fn entity(rng: &mut ChaCha8Rng, variety: usize) -> String {
    let kind = pick(rng, NF_KINDS);
    match variety % 6 {
        0 => pick(rng, NF_NAMES).to_string(),
        1 => pick(rng, NF_SHORT).to_string(),
        2 => format!("{kind} instance #{}", rng.gen_range(1..=12)),
        3 => {
            const ALNUM: &[u8] = b"ABCDEFGHJKLMNPQRSTUVWXYZ0123456789";
            let id: String = (0..4).map(|_| ALNUM[rng.gen_range(0..ALNUM.len())] as char).collect();
            format!("{kind}-{id}")
        }
        4 => format!("{kind} 0x{:04X}", rng.gen_range(0x1000..0xFFFF_u32)),
        _ => format!("{kind} {}", uuid(rng)),
    }
}

struct Slots {
    loc: String,
    nf: String,
    slice: &'static str,
    qos: &'static str,
    kpi: String,
    users: String,
    freq: String,
}

fn fill(template: &str, s: &Slots) -> String {
    template
        .replace("{loc}", &s.loc)
        .replace("{nf}", &s.nf)
        .replace("{slice}", s.slice)
        .replace("{qos}", s.qos)
        .replace("{kpi}", &s.kpi)
        .replace("{users}", &s.users)
        .replace("{freq}", &s.freq)
}

const DEPLOYMENT_TEMPLATES: [&str; 10] = [
    "Deploy a new {slice} in {loc} supporting {users} with {kpi}.",
    "Set up a 5G core network in {loc} with {nf} and capacity for {users}.",
    "Provision a fresh {slice} at {loc} that guarantees {kpi}.",
    "Instantiate a new core network for {users} in {loc}.",
    "Roll out a standalone 5G core deployment in {loc} using {nf}.",
    "Launch a new private network at {loc} for {users} with {qos} service.",
    "Create a new network in {loc} with the following specifications: {kpi} and {qos} service.",
    "Spin up an additional network deployment in {loc} dedicated to {slice} traffic.",
    "Establish a new 5G network in {loc} able to serve {users}.",
    "Bring up a new core network instance in {loc} with {nf} and {kpi}.",
];

const MODIFICATION_TEMPLATES: [&str; 10] = [
    "Modify {nf} in {loc} to address the performance issues caused by high loading.",
    "Adjust the configuration parameters of {nf} in {loc} to enhance throughput.",
    "Change the settings of the {slice} in {loc} to reduce congestion.",
    "Update {nf} to allocate more resources because traffic in {loc} has increased.",
    "Reconfigure {nf} at {loc} so that it can handle the current overload.",
    "Scale out {nf} in {loc} to relieve the heavy load.",
    "Alter the bandwidth allocation of the {slice} at {loc} to fix the degraded performance.",
    "Tune the parameters of {nf} in {loc} to resolve the high CPU load.",
    "Revise the existing {slice} configuration in {loc} to improve capacity.",
    "Increase the capacity of {nf} serving {loc} since it is overloaded.",
];

const ASSURANCE_TEMPLATES: [&str; 10] = [
    "Ensure that the {slice} in {loc} maintains {kpi}.",
    "Guarantee {kpi} for the {qos} application running on {nf}.",
    "Make sure the deployed network in {loc} can support a {qos} application with {kpi}.",
    "Assure that the service level for {users} in {loc} stays at {kpi}.",
    "Maintain {kpi} on the {slice} at all times.",
    "Continuously guarantee that {nf} delivers {kpi}.",
    "Keep the performance of the {slice} in {loc} within {kpi}.",
    "Ensure the network supports {qos} traffic with {kpi}.",
    "Uphold {kpi} for {users} connected through {nf}.",
    "Enforce the {qos} service requirements of {kpi} across {loc}.",
];

const REPORT_TEMPLATES: [&str; 10] = [
    "Summarize the results of the last intent for {loc}.",
    "Give me a report on the outcome of the previous deployment in {loc}.",
    "Provide a summary of how the intent for {nf} was fulfilled.",
    "Show me the report for the intent applied to the {slice}.",
    "What were the results of the most recent request concerning {nf}?",
    "Generate an intent report describing the changes made in {loc}.",
    "Report back on the outcome of the previous intent for the {slice}.",
    "Send me an overview of the results from the earlier modification of {nf}.",
    "Compile a summary report of the last request handled in {loc}.",
    "Tell me how the previous intent targeting {nf} turned out.",
];

const FEASIBILITY_TEMPLATES: [&str; 10] = [
    "Before proceeding, ensure that capacity exists in {loc} to deploy the {slice}.",
    "Check whether {loc} has enough resources to support {users}.",
    "Is it feasible to add {nf} in {loc} without exceeding capacity?",
    "Verify that there is sufficient capacity at {loc} before making the required changes.",
    "Determine if the infrastructure in {loc} can accommodate {kpi}.",
    "Assess the feasibility of deploying the {slice} in {loc}.",
    "Can {loc} handle an additional {users} before we proceed?",
    "Confirm that resources are available in {loc} to scale {nf}.",
    "Evaluate whether it is possible to provide {kpi} in {loc}.",
    "Find out if {nf} has spare capacity for the planned changes in {loc}.",
];

const NOTIFICATION_TEMPLATES: [&str; 10] = [
    "Notify me of the status of {nf} {freq}.",
    "Send me updates on the {slice} in {loc} {freq}.",
    "Alert me about the health of {nf} {freq}.",
    "Provide a status notification for the network in {loc} {freq}.",
    "Keep me informed about {kpi} compliance of the {slice} {freq}.",
    "Email me the current state of {nf} {freq}.",
    "Push a notification on the {loc} network status {freq}.",
    "I want to receive regular updates on {nf} {freq}.",
    "Schedule a recurring status message about the {slice} {freq}.",
    "Let me know the condition of the network at {loc} {freq}.",
];

fn templates(intent_index: usize) -> &'static [&'static str; 10] {
    match intent_index {
        0 => &DEPLOYMENT_TEMPLATES,
        1 => &MODIFICATION_TEMPLATES,
        2 => &ASSURANCE_TEMPLATES,
        3 => &REPORT_TEMPLATES,
        4 => &FEASIBILITY_TEMPLATES,
        _ => &NOTIFICATION_TEMPLATES,
    }
}

const WORD_CHOICE_RATE: f64 = 0.4;

/// Swaps some everyday words for common alternatives, so seeds written from
/// the same template do not all share one vocabulary.
fn vary_wording(rng: &mut ChaCha8Rng, text: &str) -> String {
    let mut table: Vec<(&str, &str)> = VARIABILITY_SYNONYMS
        .iter()
        .chain(PARAPHRASE_SYNONYMS)
        .copied()
        .collect();
    table.shuffle(rng);
    let mut accept = || rng.gen_bool(WORD_CHOICE_RATE);
    substitute_where(text, &table, &mut accept).0
}

/// `per_intent` seed prompts for each built-in intent, ids `<slug>-NN`.
pub fn generate_seeds(rng_seed: u64, per_intent: usize) -> Vec<LabeledPrompt> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = Vec::with_capacity(per_intent * INTENTS.len());
    for (k, intent) in INTENTS.iter().enumerate() {
        let templates = templates(k);
        let mut seen = std::collections::HashSet::new();
        let mut n = 0;
        let mut attempt = 0;
        while n < per_intent {
            let slots = Slots {
                loc: location(&mut rng, n + attempt),
                nf: entity(&mut rng, n + attempt),
                slice: pick(&mut rng, SLICES),
                qos: pick(&mut rng, QOS),
                kpi: numbered(&mut rng, KPI_FORMS),
                users: numbered(&mut rng, USER_FORMS),
                freq: numbered(&mut rng, FREQUENCY_FORMS),
            };
            let text = vary_wording(&mut rng, &fill(templates[n % templates.len()], &slots));
            if !seen.insert(text.clone()) {
                attempt += 1;
                continue;
            }
            out.push(
                LabeledPrompt::new(text, intent.name, Variant::Seed).with_source(format!(
                    "{}-{:02}",
                    intent.slug,
                    n + 1
                )),
            );
            n += 1;
        }
    }
    out
}

/// Seeds plus one variability and one paraphrase version of each, produced by
/// `llm` (rule-based when generating the committed corpus).
pub fn generate_corpus(rng_seed: u64, per_intent: usize, llm: &dyn ChatModel) -> Result<Corpus> {
    let seeds = generate_seeds(rng_seed, per_intent);
    let variability = generate_variants(&seeds, Variant::Variability, llm)?;
    let paraphrase = generate_variants(&seeds, Variant::Paraphrase, llm)?;
    let mut prompts = seeds;
    prompts.extend(variability);
    prompts.extend(paraphrase);
    Ok(Corpus::new(prompts))
}

/// Regenerates the committed corpus.
pub fn shipped_corpus_text() -> Result<String> {
    let corpus = generate_corpus(SHIPPED_SEED, SEEDS_PER_INTENT, &RuleBasedRewriter)?;
    Ok(super::to_jsonl(&corpus))
}
