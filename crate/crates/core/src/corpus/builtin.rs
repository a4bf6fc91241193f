//! The six 5G core intent routes and their base utterances from
//! 3GPP TS 28.312.

use crate::router::Route;

pub const DEPLOYMENT: &str = "Deployment Intent";
pub const MODIFICATION: &str = "Modification Intent";
pub const PERFORMANCE_ASSURANCE: &str = "Performance Assurance Intent";
pub const REPORT_REQUEST: &str = "Intent Report Request";
pub const FEASIBILITY_CHECK: &str = "Intent Feasibility Check";
pub const NOTIFICATION_REQUEST: &str = "Regular Notification Request";

pub(crate) struct BuiltinIntent {
    pub name: &'static str,
    pub base: &'static str,
    pub action: &'static str,
    pub slug: &'static str,
    /// Lowercase stems; a prompt for this intent is expected to contain one.
    pub keywords: &'static [&'static str],
}

pub(crate) const INTENTS: [BuiltinIntent; 6] = [
    BuiltinIntent {
        name: DEPLOYMENT,
        base: "Deploy a new network in [region] with the following specifications...",
        action: "deploy",
        slug: "deploy",
        keywords: &[
            "deploy",
            "set up",
            "provision",
            "instantiate",
            "roll out",
            "launch",
            "create",
            "spin up",
            "establish",
            "bring up",
            "stand up",
            "install",
            "new",
            "build",
        ],
    },
    BuiltinIntent {
        name: MODIFICATION,
        base: "Modify the existing [network] to address the performance issues caused by high loading...",
        action: "modify",
        slug: "modify",
        keywords: &[
            "modify",
            "adjust",
            "change",
            "update",
            "reconfigur",
            "scale",
            "alter",
            "tune",
            "tweak",
            "revise",
            "increase",
            "amend",
            "adapt",
            "expand",
            "boost",
            "raise",
            "realloc",
            "fine-tune",
            "rework",
            "optimiz",
            "overload",
            "load",
        ],
    },
    BuiltinIntent {
        name: PERFORMANCE_ASSURANCE,
        base:
            "Ensure that the deployed network can support a [QoS Level] application with the following requirements...",
        action: "assure",
        slug: "assure",
        keywords: &[
            "ensure",
            "guarantee",
            "assur",
            "make sure",
            "maintain",
            "keep",
            "uphold",
            "enforce",
            "sustain",
            "preserve",
            "make certain",
            "secure",
            "stays",
            "remain",
        ],
    },
    BuiltinIntent {
        name: REPORT_REQUEST,
        base: "Summarize the results of the previous request.",
        action: "report",
        slug: "report",
        keywords: &[
            "summar",
            "report",
            "result",
            "outcome",
            "overview",
            "recap",
            "turned out",
            "findings",
            "rundown",
            "how did",
            "account of",
            "follow up",
        ],
    },
    BuiltinIntent {
        name: FEASIBILITY_CHECK,
        base: "Before proceeding, ensure that capacity exists in [region] to perform the required changes.",
        action: "feasibility_check",
        slug: "feasibility",
        keywords: &[
            "capacity",
            "feasib",
            "possible",
            "enough",
            "sufficient",
            "resources",
            "accommodate",
            "whether",
            "available",
            "headroom",
            "room",
            "viab",
            "can ",
            "able to",
        ],
    },
    BuiltinIntent {
        name: NOTIFICATION_REQUEST,
        base: "Notify me of the status of [network] every [frequency].",
        action: "schedule_notification",
        slug: "notify",
        keywords: &[
            "notif",
            "update",
            "alert",
            "inform",
            "let me know",
            "email",
            "status",
            "message",
            "ping",
            "every",
            "hourly",
            "daily",
            "weekly",
            "monthly",
            "current state",
            "regular",
            "recurring",
            "periodic",
        ],
    },
];

/// The six intent routes with their base utterances and default thresholds.
pub fn builtin_routes() -> Vec<Route> {
    INTENTS
        .iter()
        .map(|i| Route::new(i.name, vec![i.base.to_string()], i.action))
        .collect()
}

pub fn builtin_route_names() -> Vec<String> {
    INTENTS.iter().map(|i| i.name.to_string()).collect()
}

pub(crate) fn intent(name: &str) -> Option<&'static BuiltinIntent> {
    INTENTS.iter().find(|i| i.name == name)
}

/// Keyword stems for a built-in intent; `None` for custom routes.
pub fn intent_keywords(name: &str) -> Option<&'static [&'static str]> {
    intent(name).map(|i| i.keywords)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_one_golden() {
        let routes = builtin_routes();
        let expected = [
            ("Deployment Intent", "Deploy a new network in [region] with the following specifications..."),
            ("Modification Intent", "Modify the existing [network] to address the performance issues caused by high loading..."),
            ("Performance Assurance Intent", "Ensure that the deployed network can support a [QoS Level] application with the following requirements..."),
            ("Intent Report Request", "Summarize the results of the previous request."),
            ("Intent Feasibility Check", "Before proceeding, ensure that capacity exists in [region] to perform the required changes."),
            ("Regular Notification Request", "Notify me of the status of [network] every [frequency]."),
        ];
        assert_eq!(routes.len(), 6);
        for (route, (name, base)) in routes.iter().zip(expected) {
            assert_eq!(route.name, name);
            assert_eq!(route.utterances, vec![base.to_string()]);
            assert_eq!(route.threshold, 0.5);
        }
        assert_eq!(
            routes[3].utterances[0],
            "Summarize the results of the previous request."
        );
    }

    #[test]
    fn base_utterances_carry_their_own_keywords() {
        for i in &INTENTS {
            let lower = i.base.to_lowercase();
            assert!(i.keywords.iter().any(|k| lower.contains(k)), "{}", i.name);
        }
    }
}
