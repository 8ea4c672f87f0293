use std::fmt;
use std::str::FromStr;

/// Supported intrusion-detection record layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Schema {
    /// UNSW-NB15 partition files (`UNSW_NB15_training-set.csv`,
    /// `UNSW_NB15_testing-set.csv`): header row, `id`, 42 features,
    /// `attack_cat`, `label`.
    UnswNb15,
    /// NSL-KDD (`KDDTrain+.txt`, `KDDTest+.txt`): 41 features, label,
    /// difficulty. The header row is optional.
    NslKdd,
}

pub const UNSW_NB15_FEATURES: [&str; 42] = [
    "dur",
    "proto",
    "service",
    "state",
    "spkts",
    "dpkts",
    "sbytes",
    "dbytes",
    "rate",
    "sttl",
    "dttl",
    "sload",
    "dload",
    "sloss",
    "dloss",
    "sinpkt",
    "dinpkt",
    "sjit",
    "djit",
    "swin",
    "stcpb",
    "dtcpb",
    "dwin",
    "tcprtt",
    "synack",
    "ackdat",
    "smean",
    "dmean",
    "trans_depth",
    "response_body_len",
    "ct_srv_src",
    "ct_state_ttl",
    "ct_dst_ltm",
    "ct_src_dport_ltm",
    "ct_dst_sport_ltm",
    "ct_dst_src_ltm",
    "is_ftp_login",
    "ct_ftp_cmd",
    "ct_flw_http_mthd",
    "ct_src_ltm",
    "ct_srv_dst",
    "is_sm_ips_ports",
];

pub const NSL_KDD_FEATURES: [&str; 41] = [
    "duration",
    "protocol_type",
    "service",
    "flag",
    "src_bytes",
    "dst_bytes",
    "land",
    "wrong_fragment",
    "urgent",
    "hot",
    "num_failed_logins",
    "logged_in",
    "num_compromised",
    "root_shell",
    "su_attempted",
    "num_root",
    "num_file_creations",
    "num_shells",
    "num_access_files",
    "num_outbound_cmds",
    "is_host_login",
    "is_guest_login",
    "count",
    "srv_count",
    "serror_rate",
    "srv_serror_rate",
    "rerror_rate",
    "srv_rerror_rate",
    "same_srv_rate",
    "diff_srv_rate",
    "srv_diff_host_rate",
    "dst_host_count",
    "dst_host_srv_count",
    "dst_host_same_srv_rate",
    "dst_host_diff_srv_rate",
    "dst_host_same_src_port_rate",
    "dst_host_srv_diff_host_rate",
    "dst_host_serror_rate",
    "dst_host_srv_serror_rate",
    "dst_host_rerror_rate",
    "dst_host_srv_rerror_rate",
];

const UNSW_CATEGORICAL: [&str; 3] = ["proto", "service", "state"];
const NSL_CATEGORICAL: [&str; 3] = ["protocol_type", "service", "flag"];

/// UNSW-NB15 `attack_cat` values (the published files use both spellings of
/// the backdoor category).
pub const UNSW_ATTACK_CATEGORIES: [&str; 10] = [
    "Generic",
    "Exploits",
    "Fuzzers",
    "DoS",
    "Reconnaissance",
    "Analysis",
    "Backdoor",
    "Backdoors",
    "Shellcode",
    "Worms",
];

/// NSL-KDD attack names grouped into the four attack families.
pub const NSL_KDD_ATTACKS: [(&str, &str); 40] = [
    ("back", "dos"),
    ("land", "dos"),
    ("neptune", "dos"),
    ("pod", "dos"),
    ("smurf", "dos"),
    ("teardrop", "dos"),
    ("apache2", "dos"),
    ("udpstorm", "dos"),
    ("processtable", "dos"),
    ("mailbomb", "dos"),
    ("satan", "probe"),
    ("ipsweep", "probe"),
    ("nmap", "probe"),
    ("portsweep", "probe"),
    ("mscan", "probe"),
    ("saint", "probe"),
    ("guess_passwd", "r2l"),
    ("ftp_write", "r2l"),
    ("imap", "r2l"),
    ("phf", "r2l"),
    ("multihop", "r2l"),
    ("warezmaster", "r2l"),
    ("warezclient", "r2l"),
    ("spy", "r2l"),
    ("xlock", "r2l"),
    ("xsnoop", "r2l"),
    ("snmpguess", "r2l"),
    ("snmpgetattack", "r2l"),
    ("httptunnel", "r2l"),
    ("sendmail", "r2l"),
    ("named", "r2l"),
    ("worm", "r2l"),
    ("buffer_overflow", "u2r"),
    ("loadmodule", "u2r"),
    ("rootkit", "u2r"),
    ("perl", "u2r"),
    ("sqlattack", "u2r"),
    ("xterm", "u2r"),
    ("ps", "u2r"),
    ("normal", "normal"),
];

impl Schema {
    pub fn name(self) -> &'static str {
        match self {
            Schema::UnswNb15 => "unsw_nb15",
            Schema::NslKdd => "nsl_kdd",
        }
    }

    pub fn feature_names(self) -> &'static [&'static str] {
        match self {
            Schema::UnswNb15 => &UNSW_NB15_FEATURES,
            Schema::NslKdd => &NSL_KDD_FEATURES,
        }
    }

    pub fn is_categorical(self, feature: &str) -> bool {
        match self {
            Schema::UnswNb15 => UNSW_CATEGORICAL.contains(&feature),
            Schema::NslKdd => NSL_CATEGORICAL.contains(&feature),
        }
    }

    /// Features kept by selection unless configured otherwise.
    pub fn default_target_count(self) -> usize {
        match self {
            Schema::UnswNb15 => 13,
            Schema::NslKdd => 15,
        }
    }

    /// Column names as they appear in a header row.
    pub fn header(self) -> Vec<&'static str> {
        match self {
            Schema::UnswNb15 => std::iter::once("id")
                .chain(UNSW_NB15_FEATURES)
                .chain(["attack_cat", "label"])
                .collect(),
            Schema::NslKdd => NSL_KDD_FEATURES
                .into_iter()
                .chain(["label", "difficulty"])
                .collect(),
        }
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Schema {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "unsw_nb15" | "unsw-nb15" | "unsw" => Ok(Schema::UnswNb15),
            "nsl_kdd" | "nsl-kdd" | "nslkdd" => Ok(Schema::NslKdd),
            other => Err(format!("unknown schema {other:?} (expected unsw_nb15 or nsl_kdd)")),
        }
    }
}

/// Binary ground truth. Class identifiers are 0 (normal) and 1 (abnormal).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Normal,
    Abnormal,
}

impl Label {
    pub fn class_id(self) -> u32 {
        match self {
            Label::Normal => 0,
            Label::Abnormal => 1,
        }
    }

    pub fn from_class_id(id: u32) -> Option<Self> {
        match id {
            0 => Some(Label::Normal),
            1 => Some(Label::Abnormal),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Abnormal => "abnormal",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
