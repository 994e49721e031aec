"""Bundled synthetic corpora.

``mismatch_corpus`` is a small hand-built corpus whose queries come in two
kinds: paraphrase queries that share no analyzed token with their target
(lexical matching misses, trigram embeddings still match) and terminology
collisions where a near-homograph outranks the target in embedding space
while the exact term still matches lexically.

``synthetic_corpus`` generates a large bilingual corpus with a fixed seed for
latency measurements.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Any, Iterator

PROV_ESCO = {"framework": "ESCO", "version": "1.2.0", "uri": "https://example.org/esco"}
PROV_ROME = {"framework": "ROME", "version": "4.0", "uri": "https://example.org/rome"}
FIXED_TIME = "2025-01-01T00:00:00+00:00"


@dataclass(frozen=True)
class EvalQuery:
    query_id: str
    text: str
    language: str
    kind: str  # paraphrase | collision
    relevant: tuple[str, ...]


def _skill(local: str, en: tuple[str, str] | None, fr: tuple[str, str] | None, **extra: Any) -> dict[str, Any]:
    labels, descs = {}, {}
    for lang, pair in (("en", en), ("fr", fr)):
        if pair:
            labels[lang] = pair[0]
            if pair[1]:
                descs[lang] = pair[1]
    rec = {"id": f"esco:{local}", "kind": "skill", "labels": labels, "descriptions": descs, "provenance": dict(PROV_ESCO)}
    rec["provenance"]["ingested_at"] = FIXED_TIME
    rec.update(extra)
    return rec


_LONG_JAVA_EN = (
    "Writing, compiling and debugging object-oriented server software in the Java language with "
    "the JVM toolchain, build tools, unit testing frameworks and enterprise application servers."
)
_LONG_JAVA_FR = (
    "Écrire, compiler et déboguer des logiciels serveurs orientés objet en langage Java avec la "
    "chaîne d'outils JVM, les outils de construction, les tests unitaires et les serveurs d'applications."
)

# (local id, en (label, description), fr (label, description))
_MISMATCH_NODES: list[tuple[str, tuple[str, str] | None, tuple[str, str] | None]] = [
    # Collision pairs: the target carries a long description, the look-alike is short.
    ("C01", ("Java programming", _LONG_JAVA_EN), ("programmation Java", _LONG_JAVA_FR)),
    ("C02", ("JavaScript programming", ""), ("programmation JavaScript", "")),
    ("C03", ("SQL querying", "Retrieving and aggregating records from relational tables with structured statements, joins, indexes and stored procedures."),
            ("requêtes SQL", "Extraire et agréger des enregistrements de tables relationnelles avec des instructions structurées, jointures, index et procédures stockées.")),
    ("C04", ("NoSQL stores", ""), ("bases NoSQL", "")),
    ("C05", ("Scala development", "Building concurrent applications for distributed data pipelines with a functional and object-oriented language on the JVM."),
            ("développement Scala", "Construire des applications concurrentes pour des chaînes de traitement distribuées avec un langage fonctionnel et objet sur la JVM.")),
    ("C06", ("scalability", ""), ("scalabilité", "")),
    ("C07", ("Lean management", "Running continuous improvement of workflows by removing waste, mapping flow and standardising work on the shop floor."),
            ("management Lean", "Conduire l'amélioration continue des flux en supprimant les gaspillages, en visualisant les flux et en standardisant le travail en atelier.")),
    ("C08", ("cleanroom", ""), ("cleanroom", "")),
    ("C09", ("Rust programming", "Writing memory-safe systems software with ownership, borrowing, traits and the cargo package manager."),
            ("programmation Rust", "Écrire des logiciels système sûrs en mémoire avec la possession, l'emprunt, les traits et le gestionnaire de paquets cargo.")),
    ("C10", ("trustworthy", ""), ("trustworthy", "")),
    ("C11", ("React development", "Building interactive single-page user interfaces from declarative components, hooks, state management and a virtual DOM."),
            ("développement React", "Construire des interfaces utilisateur interactives monopage à partir de composants déclaratifs, de hooks, de gestion d'état et d'un DOM virtuel.")),
    ("C12", ("reactivity", ""), ("réactivité", "")),
    # Paraphrase targets: the query uses a spelling the corpus never contains.
    ("P01", ("query optimization", "Tuning execution plans."), ("optimisation de requêtes", "Réglage des plans d'exécution.")),
    ("P02", ("data visualization", "Charts and dashboards."), ("visualisation des données", "Graphiques et tableaux de bord.")),
    ("P03", ("cybersecurity", "Protecting networks."), ("cybersécurité", "Protection des réseaux.")),
    ("P04", ("bookkeeping", "Recording transactions."), ("tenue de comptabilité", "Enregistrement des opérations.")),
    ("P05", ("catalog management", "Product listings."), ("gestion de catalogue", "Fiches produits.")),
    ("P06", ("license compliance", "Software audits."), ("conformité des licences", "Audits logiciels.")),
    ("P07", ("center operations", "Facility running."), ("exploitation de centre", "Fonctionnement des sites.")),
    ("P08", ("datawarehouse design", "Star schemas."), ("conception d'entrepôt de données", "Schémas en étoile.")),
    ("P09", ("analyzing", "Examining results."), ("compétence numérique", "Usage des outils informatiques.")),
    ("P10", ("organizing", "Planning conferences."), ("travail d'équipe", "Coopération au quotidien.")),
    # Background skills.
    ("B01", ("project management", "Planning, executing and closing projects on time and budget."), ("gestion de projet", "Planifier, exécuter et clôturer des projets dans les délais et le budget.")),
    ("B02", ("public speaking", "Presenting ideas to an audience with clarity."), ("prise de parole en public", "Présenter des idées à un public avec clarté.")),
    ("B03", ("negotiation", "Reaching agreements between parties."), ("négociation", "Parvenir à des accords entre parties.")),
    ("B04", ("woodworking", "Shaping and joining timber."), ("menuiserie", "Façonner et assembler le bois.")),
    ("B05", ("first aid", "Providing emergency care."), ("premiers secours", "Prodiguer des soins d'urgence.")),
    ("B06", ("machine learning", "Training predictive models from examples."), ("apprentissage automatique", "Entraîner des modèles prédictifs à partir d'exemples.")),
    ("B07", ("statistics", "Describing and inferring from samples."), ("statistiques", "Décrire et inférer à partir d'échantillons.")),
    ("B08", ("welding", "Fusing metal parts."), ("soudage", "Assembler des pièces métalliques.")),
    ("B09", ("customer service", "Handling client requests politely."), ("service client", "Traiter les demandes des clients avec courtoisie.")),
    ("B10", ("graphic design", "Composing visual layouts."), ("conception graphique", "Composer des mises en page visuelles.")),
]

_MISMATCH_QUERIES: list[tuple[str, str, str, str, str]] = [
    # (query id, language, kind, text, relevant local id)
    ("en-c1", "en", "collision", "Java", "C01"),
    ("en-c2", "en", "collision", "SQL", "C03"),
    ("en-c3", "en", "collision", "Scala", "C05"),
    ("en-c4", "en", "collision", "Lean", "C07"),
    ("en-c5", "en", "collision", "Rust", "C09"),
    ("en-c6", "en", "collision", "React", "C11"),
    ("en-p1", "en", "paraphrase", "optimisation", "P01"),
    ("en-p2", "en", "paraphrase", "visualisation", "P02"),
    ("en-p3", "en", "paraphrase", "cyber-security", "P03"),
    ("en-p4", "en", "paraphrase", "book-keeping", "P04"),
    ("en-p5", "en", "paraphrase", "catalogue", "P05"),
    ("en-p6", "en", "paraphrase", "licence", "P06"),
    ("en-p7", "en", "paraphrase", "centre", "P07"),
    ("en-p8", "en", "paraphrase", "warehouse", "P08"),
    ("en-p9", "en", "paraphrase", "analysing", "P09"),
    ("en-p10", "en", "paraphrase", "organising", "P10"),
    ("fr-c1", "fr", "collision", "Java", "C01"),
    ("fr-c2", "fr", "collision", "SQL", "C03"),
    ("fr-c3", "fr", "collision", "Scala", "C05"),
    ("fr-c4", "fr", "collision", "Lean", "C07"),
    ("fr-c5", "fr", "collision", "Rust", "C09"),
    ("fr-c6", "fr", "collision", "React", "C11"),
    ("fr-p1", "fr", "paraphrase", "optimisations", "P01"),
    ("fr-p2", "fr", "paraphrase", "visualisations", "P02"),
    ("fr-p3", "fr", "paraphrase", "cybersecurite", "P03"),
    ("fr-p4", "fr", "paraphrase", "comptabilite", "P04"),
    ("fr-p5", "fr", "paraphrase", "catalogues", "P05"),
    ("fr-p6", "fr", "paraphrase", "licence logicielle", "P06"),
    ("fr-p7", "fr", "paraphrase", "centres", "P07"),
    ("fr-p8", "fr", "paraphrase", "entrepôts", "P08"),
    ("fr-p9", "fr", "paraphrase", "compétences numériques", "P09"),
    ("fr-p10", "fr", "paraphrase", "équipes", "P10"),
]


def mismatch_corpus() -> list[dict[str, Any]]:
    records = [_skill(local, en, fr) for local, en, fr in _MISMATCH_NODES]
    occupation = {
        "id": "esco:O01",
        "kind": "occupation",
        "labels": {"en": "software developer", "fr": "développeur logiciel"},
        "provenance": dict(PROV_ESCO, ingested_at=FIXED_TIME),
    }
    by_id = {r["id"]: r for r in records}
    for local in ("C01", "C02", "C03", "C05", "C09", "C11"):
        by_id[f"esco:{local}"]["relations"] = [{"type": "isRelevantForOccupation", "target": "esco:O01"}]
    return records + [occupation]


def mismatch_queries() -> list[EvalQuery]:
    return [EvalQuery(qid, text, lang, kind, (f"esco:{rel}",)) for qid, lang, kind, text, rel in _MISMATCH_QUERIES]


# ----------------------------------------------------------------- synthetic

_VERBS = [
    ("analyse", "analyser"), ("design", "concevoir"), ("manage", "gérer"), ("develop", "développer"),
    ("teach", "enseigner"), ("evaluate", "évaluer"), ("maintain", "entretenir"), ("configure", "configurer"),
    ("document", "documenter"), ("optimise", "optimiser"), ("plan", "planifier"), ("audit", "auditer"),
    ("monitor", "surveiller"), ("install", "installer"), ("coordinate", "coordonner"), ("test", "tester"),
    ("negotiate", "négocier"), ("repair", "réparer"), ("supervise", "superviser"), ("prepare", "préparer"),
]  # fmt: skip
_OBJECTS = [
    ("databases", "bases de données"), ("budgets", "budgets"), ("networks", "réseaux"), ("curricula", "programmes"),
    ("machinery", "machines"), ("contracts", "contrats"), ("websites", "sites web"), ("supply chains", "chaînes logistiques"),
    ("laboratory samples", "échantillons de laboratoire"), ("marketing campaigns", "campagnes marketing"),
    ("electrical systems", "systèmes électriques"), ("customer accounts", "comptes clients"),
    ("training sessions", "sessions de formation"), ("software releases", "versions logicielles"),
    ("safety procedures", "procédures de sécurité"), ("financial reports", "rapports financiers"),
    ("medical records", "dossiers médicaux"), ("construction sites", "chantiers"), ("data pipelines", "flux de données"),
    ("inventory", "stocks"), ("recruitment processes", "processus de recrutement"), ("legal documents", "documents juridiques"),
    ("energy installations", "installations énergétiques"), ("learning platforms", "plateformes d'apprentissage"),
    ("vehicle fleets", "flottes de véhicules"),
]  # fmt: skip
_CONTEXTS = [
    ("in small teams", "en petite équipe"), ("for public services", "pour les services publics"),
    ("in healthcare", "dans la santé"), ("in manufacturing", "dans l'industrie"), ("for startups", "pour les jeunes pousses"),
    ("in retail", "dans le commerce"), ("in education", "dans l'éducation"), ("for local authorities", "pour les collectivités"),
    ("in logistics", "dans la logistique"), ("in agriculture", "dans l'agriculture"), ("in finance", "dans la finance"),
    ("in tourism", "dans le tourisme"), ("in research", "dans la recherche"), ("for nonprofits", "pour les associations"),
    ("in energy", "dans l'énergie"), ("in transport", "dans les transports"), ("in media", "dans les médias"),
    ("in construction", "dans le bâtiment"), ("in telecoms", "dans les télécoms"), ("in hospitality", "dans l'hôtellerie"),
]  # fmt: skip


def synthetic_corpus(n_skills: int = 10_000, n_occupations: int = 200, seed: int = 7) -> Iterator[dict[str, Any]]:
    """Bilingual ESCO-style skills plus occupations, relations and a ROME slice with mappings."""
    rng = random.Random(seed)
    combos = [(v, o, c) for v in _VERBS for o in _OBJECTS for c in _CONTEXTS]
    if n_skills > len(combos):
        raise ValueError(f"at most {len(combos)} synthetic skills available")
    rng.shuffle(combos)
    prov = dict(PROV_ESCO, ingested_at=FIXED_TIME)
    for i in range(n_occupations):
        v, o, c = combos[i % len(combos)]
        yield {
            "id": f"esco:O{i:04d}",
            "kind": "occupation",
            "labels": {"en": f"{o[0]} specialist {c[0]}", "fr": f"spécialiste {o[1]} {c[1]}"},
            "provenance": prov,
        }
    for i, (v, o, c) in enumerate(combos[:n_skills]):
        relations = [{"type": "isRelevantForOccupation", "target": f"esco:O{rng.randrange(n_occupations):04d}"}]
        if i:
            relations.append({"type": rng.choice(["related", "broader", "hasPrerequisite"]), "target": f"esco:S{rng.randrange(i):05d}"})
        yield {
            "id": f"esco:S{i:05d}",
            "kind": "skill",
            "labels": {"en": f"{v[0]} {o[0]} {c[0]}", "fr": f"{v[1]} des {o[1]} {c[1]}"},
            "alt_labels": {"en": [f"{o[0]} {v[0]}ing"]},
            "descriptions": {
                "en": f"Ability to {v[0]} {o[0]} {c[0]}, following professional standards and safety rules.",
                "fr": f"Capacité à {v[1]} des {o[1]} {c[1]}, selon les normes professionnelles et les règles de sécurité.",
            },
            "relations": relations,
            "provenance": prov,
        }


def synthetic_queries(n: int = 100, seed: int = 11) -> list[tuple[str, str]]:
    """(text, language) pairs mixing exact fragments and loose paraphrases."""
    rng = random.Random(seed)
    out = []
    for i in range(n):
        v, o, c = rng.choice(_VERBS), rng.choice(_OBJECTS), rng.choice(_CONTEXTS)
        style = i % 3
        if style == 0:
            out.append((f"{v[0]} {o[0]}", "en"))
        elif style == 1:
            out.append((f"how to {v[0]} {o[0]} {c[0]}", "en"))
        else:
            out.append((f"{o[0]}", "en"))
    return out
