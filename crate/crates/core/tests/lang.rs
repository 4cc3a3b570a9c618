use proptest::prelude::*;
use touchstone_core::error::{Error, Result};
use touchstone_core::lang::*;
use touchstone_core::scene::{FruitClass, Workspace};

fn obj(label: &str, class: FruitClass, position: [f64; 2], hardness: f64) -> MeasuredObject {
    MeasuredObject { label: label.into(), class, position, hardness }
}

fn input(intent: Intent, objects: Vec<MeasuredObject>, not_found: Vec<FruitClass>) -> ExplanationInput {
    ExplanationInput { intent, objects, not_found, workspace: Workspace::default() }
}

#[test]
fn parses_the_reference_queries() {
    let i = parse_query("I want to know the hardness of the banana").unwrap();
    assert_eq!(i, Intent { targets: vec![FruitClass::Banana], property: Property::Hardness, mode: QueryMode::Identify, explicit: true });

    let i = parse_query("Summarize the ripeness of all fruits in the scene").unwrap();
    assert_eq!(i, Intent { targets: vec![], property: Property::Ripeness, mode: QueryMode::Summarize, explicit: false });
    assert!(i.all_fruits());

    let i = parse_query("Which lemon is the softest?").unwrap();
    assert_eq!(i, Intent { targets: vec![FruitClass::Lemon], property: Property::Softness, mode: QueryMode::Superlative, explicit: true });

    let i = parse_query("How ripe are the banana and the lemon?").unwrap();
    assert_eq!(i.targets, vec![FruitClass::Banana, FruitClass::Lemon]);
    assert_eq!(i.property, Property::Ripeness);

    let e = parse_query("what time is it").unwrap_err();
    assert_eq!(e.raw, "what time is it");
}

#[test]
fn ripeness_reference_values() {
    let r = RipenessRules::default();
    assert_eq!(interpret_ripeness(FruitClass::Banana, 63.05, &r), Ripeness::Ripe);
    assert_eq!(interpret_ripeness(FruitClass::Banana, 72.63, &r), Ripeness::Unripe);
    for h in [0.0, 50.0, 100.0] {
        assert_eq!(interpret_ripeness(FruitClass::Mango, h, &r), Ripeness::NotApplicable);
    }
}

#[test]
fn single_banana_gets_one_sentence_with_ripeness() {
    let intent = parse_query("I want to know the hardness of the banana").unwrap();
    let inp = input(intent, vec![obj("banana", FruitClass::Banana, [0.0, 0.0], 63.0)], vec![]);
    let text = template_explanation(&inp, &RipenessRules::default());
    assert_eq!(text, "The banana in the center has a hardness of 63.0 HA and is ripe.");
    assert_eq!(sentences(&text).len(), 1);
}

#[test]
fn superlative_names_the_hardest() {
    let intent = parse_query("Identify the most hard apple in the scene.").unwrap();
    assert_eq!(intent.mode, QueryMode::Superlative);
    let objs = vec![
        obj("apple", FruitClass::Apple, [-250.0, 150.0], 71.0),
        obj("apple", FruitClass::Apple, [250.0, -150.0], 78.5),
    ];
    let text = template_explanation(&input(intent, objs, vec![]), &RipenessRules::default());
    assert!(text.ends_with("The hardest apple is the apple at the front-right."), "{text}");
}

#[test]
fn missing_target_is_reported() {
    let intent = parse_query("Summarize the hardness of the kiwi, lime and pear.").unwrap();
    let inp = input(
        intent,
        vec![obj("lime", FruitClass::Lime, [0.0, 0.0], 66.0), obj("pear", FruitClass::Pear, [200.0, 0.0], 80.0)],
        vec![FruitClass::Kiwi],
    );
    inp.validate().unwrap();
    let text = template_explanation(&inp, &RipenessRules::default());
    assert!(text.contains("No kiwi was found in the scene."));
    assert_eq!(judge(&text, &inp, &RipenessRules::default()), JudgeScore { accuracy: 5, completeness: 5, clarity: 5 });
}

#[test]
fn omitting_a_target_costs_completeness() {
    let intent = parse_query("Summarize the hardness of the apple, mango and orange.").unwrap();
    let inp = input(
        intent,
        vec![
            obj("apple", FruitClass::Apple, [-200.0, 0.0], 70.0),
            obj("mango", FruitClass::Mango, [0.0, 0.0], 74.0),
            obj("orange", FruitClass::Orange, [200.0, 0.0], 78.0),
        ],
        vec![],
    );
    let full = template_explanation(&inp, &RipenessRules::default());
    let partial: Vec<String> = sentences(&full).into_iter().filter(|s| !s.contains("orange")).collect();
    let s = judge(&partial.join(" "), &inp, &RipenessRules::default());
    assert!(s.completeness <= 3, "{s:?}");
    assert!(!s.passes());
}

struct Offline;

impl ExplanationClient for Offline {
    fn complete(&self, _: &ClientRequest) -> Result<ClientReply> {
        Err(Error::Client("connection refused".into()))
    }
}

struct Echo;

impl ExplanationClient for Echo {
    fn complete(&self, req: &ClientRequest) -> Result<ClientReply> {
        assert_eq!(req.role_string, ROLE);
        assert_eq!(req.temperature, TEMPERATURE);
        Ok(ClientReply { text: format!("{} objects", req.objects.len()) })
    }
}

#[test]
fn external_backend_reply_is_verbatim_and_failure_degrades() {
    let intent = parse_query("How hard is the pear?").unwrap();
    let inp = input(intent, vec![obj("pear", FruitClass::Pear, [0.0, 0.0], 80.0)], vec![]);
    let rules = RipenessRules::default();
    let extra = default_prompt_rules(&rules);
    let ok = compose_explanation(&inp, &rules, Backend::External { client: &Echo, prompt_rules: &extra });
    assert_eq!(ok, Explanation { text: "1 objects".into(), degraded: false });
    let down = compose_explanation(&inp, &rules, Backend::External { client: &Offline, prompt_rules: &extra });
    assert!(down.degraded);
    assert_eq!(down.text, template_explanation(&inp, &rules));
}

fn class_strategy() -> impl Strategy<Value = FruitClass> {
    (0usize..FruitClass::ALL.len()).prop_map(|i| FruitClass::ALL[i])
}

fn objects_strategy() -> impl Strategy<Value = Vec<MeasuredObject>> {
    proptest::collection::vec((class_strategy(), -290.0f64..290.0, -190.0f64..190.0, 40.0f64..95.0), 1..6).prop_map(|v| {
        v.into_iter().map(|(c, x, y, h)| obj(c.name(), c, [x, y], (h * 10.0).round() / 10.0)).collect()
    })
}

proptest! {
    #[test]
    fn parser_is_total(text in "\\PC{0,60}") {
        let _ = parse_query(&text);
    }

    #[test]
    fn superlative_choice_survives_monotone_rescaling(objs in objects_strategy(), a in 0.1f64..3.0, b in -20.0f64..20.0) {
        let ws = Workspace::default();
        let scaled: Vec<MeasuredObject> =
            objs.iter().map(|o| MeasuredObject { hardness: a * o.hardness + b + (o.hardness / 10.0).powi(3), ..o.clone() }).collect();
        for p in [Property::Hardness, Property::Softness] {
            let i = superlative_choice(&objs, p, &ws).map(|o| (o.label.clone(), o.position));
            let j = superlative_choice(&scaled, p, &ws).map(|o| (o.label.clone(), o.position));
            prop_assert_eq!(i, j);
        }
    }

    #[test]
    fn template_is_pure_and_self_consistent(objs in objects_strategy(), missing in proptest::collection::vec(class_strategy(), 0..3)) {
        let mut targets: Vec<FruitClass> = objs.iter().map(|o| o.class).collect();
        let not_found: Vec<FruitClass> = missing.into_iter().filter(|c| !targets.contains(c)).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
        targets.extend(&not_found);
        targets.sort();
        targets.dedup();
        let intent = Intent { targets: targets.clone(), property: Property::Hardness, mode: QueryMode::Summarize, explicit: true };
        let inp = input(intent, objs, not_found.clone());
        let rules = RipenessRules::default();
        let a = template_explanation(&inp, &rules);
        prop_assert_eq!(&a, &template_explanation(&inp, &rules));
        for c in &not_found {
            prop_assert_eq!(a.matches(&format!("No {} was found", c.name())).count(), 1);
            prop_assert!(!inp.objects.iter().any(|o| o.class == *c));
        }
        let s = judge(&a, &inp, &rules);
        prop_assert!(s.passes(), "{:?} for {}", s, a);
    }
}
