#!/usr/bin/env python3
"""Regenerates data/fixtures (apart from the synthetic chain corpus, which
comes from `sbomchain synth --kind chains`). Output is deterministic."""

import csv
import json
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "data" / "fixtures"
rng = random.Random(2024)

SEVERITY = [(9.0, "CRITICAL"), (7.0, "HIGH"), (4.0, "MEDIUM"), (0.1, "LOW")]


def severity(score):
    for lo, name in SEVERITY:
        if score >= lo:
            return name
    return "NONE"


CWES = ["CWE-20", "CWE-22", "CWE-78", "CWE-79", "CWE-89", "CWE-94", "CWE-287", "CWE-416", "CWE-502", "CWE-787",
        "CWE-862", "CWE-918"]

records = {}
kev = []

# The one real chain in the set; every other id below is synthetic (9xxxx / 8xxxx).
proxylogon = [("CVE-2021-26855", 9.8, ["CWE-918"]), ("CVE-2021-26857", 7.8, ["CWE-502"]),
              ("CVE-2021-26858", 7.8, ["CWE-22"]), ("CVE-2021-27065", 7.8, ["CWE-22"])]
for cve, score, cwes in proxylogon:
    records[cve] = dict(cve_id=cve, cvss_base=score, severity=severity(score), published_year=2021,
                        exploited=True, reference_count=rng.randint(20, 60), cwe_ids=cwes)
    kev.append(cve)

chains = [dict(chain_id="chain-001", source_type="INCIDENT", cve_ids=[c for c, _, _ in proxylogon],
               reference="https://example.org/incidents/exchange-2021", year=2021)]

lengths = [2] * 22 + [3] * 8 + [4] * 4
rng.shuffle(lengths)
incident_slots = set(rng.sample(range(len(lengths)), 7))
serial = 1
for i, length in enumerate(lengths):
    year = rng.randint(2014, 2023)
    ids = []
    for _ in range(length):
        cve = f"CVE-{year}-9{serial:04d}"
        serial += 1
        score = round(rng.uniform(6.5, 10.0), 1)
        exploited = rng.random() < 0.6
        records[cve] = dict(cve_id=cve, cvss_base=score, severity=severity(score), published_year=year,
                            exploited=exploited, reference_count=rng.randint(3, 40),
                            cwe_ids=sorted(rng.sample(CWES, rng.randint(1, 2))))
        if exploited:
            kev.append(cve)
        ids.append(cve)
    source = "INCIDENT" if i in incident_slots else "DISCLOSURE"
    chains.append(dict(chain_id=f"chain-{i + 2:03d}", source_type=source, cve_ids=ids,
                       reference=f"https://example.org/{source.lower()}s/{i + 2:03d}", year=year))

# CVEs that appear in SBOMs but in no chain.
standalone = []
for k in range(40):
    year = rng.randint(2012, 2024)
    cve = f"CVE-{year}-8{k + 1:04d}"
    score = round(rng.uniform(2.0, 9.5), 1)
    exploited = rng.random() < 0.1
    records[cve] = dict(cve_id=cve, cvss_base=score, severity=severity(score), published_year=year,
                        exploited=exploited, reference_count=rng.randint(1, 15),
                        cwe_ids=sorted(rng.sample(CWES, rng.randint(0, 2))))
    if exploited:
        kev.append(cve)
    standalone.append(cve)

LIBS = ["zlib", "openssl", "libxml2", "requests", "urllib3", "jinja2", "flask", "pyyaml", "lxml", "pillow",
        "numpy", "six", "idna", "certifi", "click", "werkzeug", "markupsafe", "cryptography", "paramiko", "sqlalchemy",
        "protobuf", "grpcio", "pydantic", "attrs"]
LICENSES = ["MIT", "Apache-2.0", "BSD-3-Clause", "Zlib", "PSF-2.0"]


def make_sbom(index):
    n = rng.randint(8, 14)
    names = rng.sample(LIBS, n - 1)
    comps = [dict(ref=f"app-{index:02d}", name=f"app-{index:02d}", version="1.0.0")]
    for name in names:
        comps.append(dict(ref=f"pkg:pypi/{name}@{rng.randint(1, 4)}.{rng.randint(0, 20)}", name=name))
    for c in comps[1:]:
        c["version"] = c["ref"].split("@")[1]
    edges = set()
    for j in range(1, n):
        edges.add((rng.randrange(j), j))  # every library reachable from the app
        for i in range(1, j):
            if rng.random() < 0.12:
                edges.add((i, j))

    findings = {}

    def plant(component, cve):
        findings.setdefault(cve, set()).add(comps[component]["ref"])

    # Plant one or two chains along dependency paths so projection has something to find.
    for chain in rng.sample(chains, rng.randint(1, 2)):
        node = rng.randrange(n)
        for cve in chain["cve_ids"]:
            plant(node, cve)
            children = sorted(b for a, b in edges if a == node)
            if children and rng.random() < 0.8:
                node = rng.choice(children)
    for cve in rng.sample(standalone, rng.randint(1, 4)):
        plant(rng.randrange(1, n), cve)

    spec_version = ["1.4", "1.5", "1.6"][index % 3]
    doc = {
        "bomFormat": "CycloneDX",
        "specVersion": spec_version,
        "version": 1,
        "metadata": {"component": {"bom-ref": comps[0]["ref"], "type": "application", "name": comps[0]["name"],
                                   "version": comps[0]["version"]}},
        "components": [],
        "dependencies": [],
        "vulnerabilities": [],
    }
    for c in comps[1:]:
        doc["components"].append({"bom-ref": c["ref"], "type": "library", "name": c["name"], "version": c["version"],
                                  "purl": c["ref"], "licenses": [{"license": {"id": rng.choice(LICENSES)}}]})
    for i, c in enumerate(comps):
        targets = sorted(comps[b]["ref"] for a, b in edges if a == i)
        doc["dependencies"].append({"ref": c["ref"], "dependsOn": targets})
    for cve in sorted(findings):
        r = records[cve]
        entry = {"id": cve, "source": {"name": "NVD"},
                 "ratings": [{"score": r["cvss_base"], "severity": r["severity"].lower(), "method": "CVSSv31"}],
                 "cwes": [int(c.split("-")[1]) for c in r["cwe_ids"]],
                 "affects": [{"ref": ref} for ref in sorted(findings[cve])]}
        doc["vulnerabilities"].append(entry)
    # A GHSA-only advisory; the parser drops it.
    if index % 4 == 0:
        doc["vulnerabilities"].append({"id": f"GHSA-xxxx-yyyy-{index:04d}", "affects": [{"ref": comps[1]["ref"]}]})
    return doc


def main():
    (OUT / "sboms").mkdir(parents=True, exist_ok=True)
    for index in range(1, 13):
        doc = make_sbom(index)
        (OUT / "sboms" / f"app-{index:02d}.cdx.json").write_text(json.dumps(doc, indent=2) + "\n")

    with open(OUT / "chains.jsonl", "w") as f:
        for c in chains:
            f.write(json.dumps(c) + "\n")

    snapshot = [records[k] for k in sorted(records)]
    (OUT / "nvd_snapshot.json").write_text(json.dumps(snapshot, indent=1) + "\n")

    with open(OUT / "kev.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["cveID", "vendorProject", "product", "vulnerabilityName", "dateAdded", "shortDescription",
                    "requiredAction", "dueDate", "knownRansomwareCampaignUse", "notes"])
        for cve in sorted(kev):
            vendor = "Microsoft" if cve.startswith("CVE-2021-2") else "Example"
            w.writerow([cve, vendor, "Product", f"{cve} vulnerability", "2022-01-10", "Exploited in the wild.",
                        "Apply updates.", "2022-01-24", "Unknown", ""])

    config = {"sbom_dir": "sboms", "snapshots": ["nvd_snapshot.json"], "kev": "kev.csv", "chains": "chains.jsonl",
              "seed": 7}
    (OUT / "pipeline.json").write_text(json.dumps(config, indent=2) + "\n")


if __name__ == "__main__":
    main()
