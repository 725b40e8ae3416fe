"""Registry of executable tool manifests with gated invocation.

Tools fall into three categories: database queries, foundation-model
interfaces, and custom analysis scripts. The registry grows during
inference: new tools are drafted by the tool-creator role, registered as
drafts, validated against their embedded test cases, and only then become
invocable. Deprecation is a status flip, never a deletion, so event logs
stay referentially intact.
"""
from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable

import yaml

from .errors import (
    GatingError,
    LoadError,
    SchemaError,
    StateError,
    ToolCreationError,
    ValidationError,
)
from .events import canonical_json, content_hash, strip_volatile
from .retrieval import rank, tokenize
from .sandbox import ResourceLimits, Sandbox


class ToolCategory(str, Enum):
    DATABASE_QUERY = "database_query"
    FOUNDATION_MODEL = "foundation_model"
    CUSTOM_ANALYSIS = "custom_analysis"


class ToolStatus(str, Enum):
    DRAFT = "draft"
    VALIDATED = "validated"
    DEPRECATED = "deprecated"


class InvocationKind(str, Enum):
    HTTP_QUERY = "http_query"
    LOCAL_SCRIPT = "local_script"
    BUILTIN = "builtin"


# Allowed invocation kinds per category; absent means unconstrained.
_KIND_CONSTRAINTS = {
    ToolCategory.DATABASE_QUERY: {InvocationKind.HTTP_QUERY, InvocationKind.BUILTIN},
    ToolCategory.CUSTOM_ANALYSIS: {InvocationKind.LOCAL_SCRIPT, InvocationKind.BUILTIN},
}


@dataclass
class InvocationSpec:
    kind: InvocationKind
    target: str  # URL, builtin name, or registry script reference
    timeout: float = 10.0
    arg_mapping: dict[str, str] = field(default_factory=dict)

    def to_record(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "target": self.target,
            "timeout": self.timeout,
            "arg_mapping": dict(sorted(self.arg_mapping.items())),
        }


@dataclass
class ToolTestCase:
    input: dict[str, Any]
    expect: dict[str, Any]  # {"field": name, "op": contains|equals|nonempty, "value": ...}

    def check(self, output: dict[str, Any]) -> tuple[bool, str]:
        fname = self.expect.get("field")
        op = self.expect.get("op", "nonempty")
        if fname not in output:
            return False, f"output missing field {fname!r}"
        value = output[fname]
        if op == "contains":
            ok = str(self.expect.get("value", "")) in str(value)
        elif op == "equals":
            ok = value == self.expect.get("value")
        elif op == "nonempty":
            ok = bool(value)
        else:
            return False, f"unknown predicate op {op!r}"
        return ok, "" if ok else f"{op} failed on field {fname!r}: got {value!r}"


@dataclass
class ToolManifest:
    name: str
    category: ToolCategory
    description: str
    input_schema: dict[str, str]
    output_schema: dict[str, str]
    invocation: InvocationSpec
    test_cases: list[ToolTestCase] = field(default_factory=list)
    status: ToolStatus = ToolStatus.DRAFT
    provenance: str = "created"  # predefined | created
    created_in_session: str | None = None
    script_source: str | None = None  # inline source for local_script tools
    id: str = ""

    def __post_init__(self):
        if not self.id:
            self.id = self.content_id()

    def content_id(self) -> str:
        body = {
            "name": self.name,
            "category": self.category.value,
            "description": self.description,
            "input_schema": dict(sorted(self.input_schema.items())),
            "output_schema": dict(sorted(self.output_schema.items())),
            "invocation": self.invocation.to_record(),
            "test_cases": [{"input": c.input, "expect": c.expect} for c in self.test_cases],
        }
        if self.invocation.kind == InvocationKind.LOCAL_SCRIPT:
            body["invocation"] = dict(body["invocation"], target="")
            body["script"] = self.script_source or ""
        return content_hash(body)[:16]

    def validate_schema(self) -> None:
        if not self.name:
            raise ValidationError("tool name must be non-empty")
        allowed = _KIND_CONSTRAINTS.get(self.category)
        if allowed is not None and self.invocation.kind not in allowed:
            raise ValidationError(
                f"category {self.category.value} does not allow invocation kind "
                f"{self.invocation.kind.value}"
            )
        for schema_name, schema in (("input", self.input_schema), ("output", self.output_schema)):
            if not isinstance(schema, dict) or not all(
                isinstance(k, str) and isinstance(v, str) for k, v in schema.items()
            ):
                raise ValidationError(f"{schema_name}_schema must map field names to type names")
        if self.invocation.kind == InvocationKind.LOCAL_SCRIPT and not self.script_source:
            raise ValidationError("local_script tools must carry script_source")
        if self.status == ToolStatus.VALIDATED and not self.test_cases:
            raise ValidationError("validated tools require at least one test case")

    def to_record(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "name": self.name,
            "category": self.category.value,
            "description": self.description,
            "input_schema": dict(sorted(self.input_schema.items())),
            "output_schema": dict(sorted(self.output_schema.items())),
            "invocation": self.invocation.to_record(),
            "test_cases": [{"input": c.input, "expect": c.expect} for c in self.test_cases],
            "status": self.status.value,
            "provenance": self.provenance,
            "created_in_session": self.created_in_session,
            "script_source": self.script_source,
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> "ToolManifest":
        inv = record["invocation"]
        return cls(
            id=record["id"],
            name=record["name"],
            category=ToolCategory(record["category"]),
            description=record["description"],
            input_schema=record["input_schema"],
            output_schema=record["output_schema"],
            invocation=InvocationSpec(
                kind=InvocationKind(inv["kind"]),
                target=inv["target"],
                timeout=inv["timeout"],
                arg_mapping=inv.get("arg_mapping", {}),
            ),
            test_cases=[ToolTestCase(c["input"], c["expect"]) for c in record["test_cases"]],
            status=ToolStatus(record["status"]),
            provenance=record["provenance"],
            created_in_session=record.get("created_in_session"),
            script_source=record.get("script_source"),
        )


@dataclass
class CaseResult:
    index: int
    passed: bool
    detail: str


@dataclass
class ValidationReport:
    tool_id: str
    passed: bool
    cases: list[CaseResult]


EventSink = Callable[[str, dict[str, Any]], None]
HttpTransport = Callable[[str, dict[str, Any]], dict[str, Any]]
Creator = Callable[[str, int, str], str]  # (gap, attempt, diagnostics) -> response text


class ToolRegistry:
    """Content-addressed manifest store with draft→validated gating."""

    def __init__(
        self,
        dir_path: str | Path | None = None,
        sandbox: Sandbox | None = None,
        http_transport: HttpTransport | None = None,
        builtins: dict[str, Callable[[dict], dict]] | None = None,
        event_sink: EventSink | None = None,
    ):
        self._dir = Path(dir_path) if dir_path else None
        self._sandbox = sandbox
        self._http = http_transport
        self._builtins = dict(builtins or {})
        self.event_sink = event_sink
        self._tools: dict[str, ToolManifest] = {}
        self._lock = threading.RLock()
        if self._dir:
            self._dir.mkdir(parents=True, exist_ok=True)
            store = self._dir / "registry.jsonl"
            if store.exists():
                self._load(store)

    def __len__(self) -> int:
        return len(self._tools)

    def get(self, tool_id: str) -> ToolManifest | None:
        return self._tools.get(tool_id)

    def all(self) -> list[ToolManifest]:
        with self._lock:
            return list(self._tools.values())

    def add_builtin(self, name: str, fn: Callable[[dict], dict]) -> None:
        self._builtins[name] = fn

    # -- registration -----------------------------------------------------

    def register(self, manifest: ToolManifest, sink: EventSink | None = None) -> str:
        """Store a manifest; idempotent by content hash.

        New manifests enter as drafts unless they are predefined and arrive
        pre-validated (the seed set).
        """
        manifest.validate_schema()
        with self._lock:
            if manifest.id in self._tools:
                return manifest.id
            if not (manifest.provenance == "predefined" and manifest.status == ToolStatus.VALIDATED):
                manifest.status = ToolStatus.DRAFT
            self._tools[manifest.id] = manifest
            self._persist()
        self._emit(sink, "tool_registered", {
            "tool_id": manifest.id,
            "name": manifest.name,
            "category": manifest.category.value,
            "status": manifest.status.value,
            "provenance": manifest.provenance,
        })
        return manifest.id

    def validate(self, tool_id: str, sink: EventSink | None = None) -> ValidationReport:
        """Run the embedded test cases; all must pass to flip draft→validated."""
        manifest = self._require(tool_id)
        if manifest.status != ToolStatus.DRAFT:
            raise StateError(f"tool {tool_id} is {manifest.status.value}, not draft")
        if not manifest.test_cases:
            raise ValidationError(f"tool {tool_id} has no test cases")
        cases = []
        for index, case in enumerate(manifest.test_cases):
            try:
                output = self._execute(manifest, case.input)
                ok, detail = case.check(output)
            except Exception as exc:  # noqa: BLE001 - diagnostics, not control flow
                ok, detail = False, f"execution failed: {exc}"
            cases.append(CaseResult(index, ok, detail))
        passed = all(c.passed for c in cases)
        if passed:
            with self._lock:
                manifest.status = ToolStatus.VALIDATED
                self._persist()
        self._emit(sink, "tool_validated" if passed else "tool_validation_failed", {
            "tool_id": tool_id,
            "name": manifest.name,
            "status": manifest.status.value,
            "cases": [{"index": c.index, "passed": c.passed, "detail": c.detail} for c in cases],
        })
        return ValidationReport(tool_id, passed, cases)

    def deprecate(self, tool_id: str) -> None:
        manifest = self._require(tool_id)
        with self._lock:
            manifest.status = ToolStatus.DEPRECATED
            self._persist()

    # -- search / invoke -----------------------------------------------------

    def search(
        self, query: str, category: ToolCategory | None = None
    ) -> list[tuple[ToolManifest, float]]:
        """Rank manifests by TF-IDF cosine over name+description."""
        with self._lock:
            tools = [
                t for t in self._tools.values()
                if category is None or t.category == category
            ]
        docs = [(t.id, tokenize(t.name) + tokenize(t.description)) for t in tools]
        scored = rank(query, docs)
        by_id = {t.id: t for t in tools}
        ordered = sorted(scored, key=lambda pair: (-pair[1], pair[0]))
        return [(by_id[tid], score) for tid, score in ordered]

    def invoke(self, tool_id: str, args: dict[str, Any], sink: EventSink | None = None) -> dict[str, Any]:
        """Run a validated tool; drafts and deprecated tools are gated off."""
        manifest = self._require(tool_id)
        if manifest.status != ToolStatus.VALIDATED:
            raise GatingError(
                f"tool {manifest.name} ({tool_id}) is {manifest.status.value}; only validated tools are invocable"
            )
        self._check_args(manifest, args)
        start = time.monotonic()
        output = self._execute(manifest, args)
        duration_ms = (time.monotonic() - start) * 1000.0
        missing = [f for f in manifest.output_schema if f not in output]
        if missing:
            raise SchemaError(f"tool output missing fields: {missing}")
        self._emit(sink, "tool_invoked", {
            "tool_id": tool_id,
            "name": manifest.name,
            "status": manifest.status.value,
            "duration_ms": duration_ms,
        })
        return output

    def _check_args(self, manifest: ToolManifest, args: dict[str, Any]) -> None:
        for fname in manifest.input_schema:
            if fname not in args:
                raise SchemaError(f"missing required field {fname!r}")
        extra = [f for f in args if f not in manifest.input_schema]
        if extra:
            raise SchemaError(f"unknown fields: {extra}")

    def _execute(self, manifest: ToolManifest, args: dict[str, Any]) -> dict[str, Any]:
        kind = manifest.invocation.kind
        if kind == InvocationKind.BUILTIN:
            fn = self._builtins.get(manifest.invocation.target)
            if fn is None:
                raise ValidationError(f"unknown builtin {manifest.invocation.target!r}")
            return fn(dict(args))
        if kind == InvocationKind.HTTP_QUERY:
            if self._http is None:
                raise ValidationError("no http transport configured for database/model tools")
            return self._http(manifest.invocation.target, dict(args))
        # local_script: run inside the sandbox, args passed as JSON argv
        if self._sandbox is None:
            raise ValidationError("no sandbox configured for script tools")
        workspace = self._sandbox.create_workspace(
            limits=ResourceLimits(wall_clock=manifest.invocation.timeout)
        )
        try:
            result = self._sandbox.run_script(
                workspace, manifest.script_source or "", [json.dumps(args)]
            )
        finally:
            self._sandbox.destroy_workspace(workspace)
        if result.exit_status != 0:
            raise ValidationError(
                f"tool script failed ({result.exit_status}): {result.stderr.strip()[:500]}"
            )
        return _parse_script_output(result.stdout)

    # -- creation pipeline ---------------------------------------------------

    def create_tool(
        self,
        gap_description: str,
        creator: Creator,
        session_id: str | None = None,
        match_threshold: float = 0.6,
        retries: int = 2,
        sink: EventSink | None = None,
    ) -> ToolManifest:
        """Close a capability gap: reuse a matching validated tool or build one.

        Pipeline: search the registry first; above-threshold validated
        matches are returned without creating anything. Otherwise the
        creator role drafts manifest + script + tests, which are registered
        and validated, with bounded retries carrying failure diagnostics
        back to the creator. Failed drafts stay quarantined as drafts.
        """
        matches = [
            (m, s) for m, s in self.search(gap_description)
            if m.status == ToolStatus.VALIDATED
        ]
        if matches and matches[0][1] >= match_threshold:
            self._emit(sink, "tool_reused", {
                "tool_id": matches[0][0].id,
                "name": matches[0][0].name,
                "score": matches[0][1],
            })
            return matches[0][0]

        diagnostics = ""
        last_error = ""
        for attempt in range(retries + 1):
            response = creator(gap_description, attempt, diagnostics)
            try:
                manifest = parse_tool_response(response)
            except ValidationError as exc:
                last_error = f"draft parse error: {exc}"
                diagnostics = last_error
                continue
            manifest.provenance = "created"
            manifest.created_in_session = session_id
            manifest.id = manifest.content_id()
            self.register(manifest, sink=sink)
            report = self.validate(manifest.id, sink=sink)
            if report.passed:
                return self.get(manifest.id)  # type: ignore[return-value]
            failing = "; ".join(f"case {c.index}: {c.detail}" for c in report.cases if not c.passed)
            last_error = f"validation failed: {failing}"
            diagnostics = last_error
        raise ToolCreationError(
            f"tool creation for gap {gap_description!r} failed after {retries + 1} attempts: {last_error}"
        )

    # -- persistence -----------------------------------------------------------

    def _persist(self) -> None:
        if self._dir is None:
            return
        store = self._dir / "registry.jsonl"
        lines = [canonical_json(t.to_record()) for t in self._tools.values()]
        store.write_text("\n".join(lines) + ("\n" if lines else ""), "utf-8")
        scripts = self._dir / "scripts"
        scripts.mkdir(exist_ok=True)
        for tool in self._tools.values():
            if tool.script_source:
                script_path = scripts / f"{tool.id}.py"
                if not script_path.exists():
                    script_path.write_text(tool.script_source, "utf-8")

    def _load(self, store: Path) -> None:
        for lineno, line in enumerate(store.read_text("utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                manifest = ToolManifest.from_record(json.loads(line))
            except (ValueError, KeyError, TypeError) as exc:
                raise LoadError(f"{store}:{lineno}: bad manifest record: {exc}") from exc
            self._tools[manifest.id] = manifest

    def store_hash(self) -> str:
        with self._lock:
            return content_hash([strip_volatile(t.to_record()) for t in self._tools.values()])

    def _require(self, tool_id: str) -> ToolManifest:
        manifest = self._tools.get(tool_id)
        if manifest is None:
            raise ValidationError(f"unknown tool: {tool_id}")
        return manifest

    def _emit(self, sink: EventSink | None, kind: str, payload: dict[str, Any]) -> None:
        target = sink or self.event_sink
        if target is not None:
            target(kind, payload)


def _parse_script_output(stdout: str) -> dict[str, Any]:
    """Tool scripts print a JSON object; the last JSON line wins."""
    for line in reversed(stdout.strip().splitlines()):
        line = line.strip()
        if line.startswith("{"):
            try:
                parsed = json.loads(line)
            except json.JSONDecodeError:
                continue
            if isinstance(parsed, dict):
                return parsed
    raise ValidationError("tool script produced no JSON object on stdout")


def parse_tool_response(text: str) -> ToolManifest:
    """Parse the creator role's TOOL / SCRIPT / TESTS sections into a draft.

    The TOOL and TESTS sections are YAML; SCRIPT is verbatim Python source
    that reads its arguments as a JSON object in argv[1] and prints a JSON
    object on stdout.
    """
    sections = _split_sections(text, ("TOOL", "SCRIPT", "TESTS"))
    if "TOOL" not in sections:
        raise ValidationError("creator response missing TOOL section")
    try:
        meta = yaml.safe_load(sections["TOOL"]) or {}
    except yaml.YAMLError as exc:
        raise ValidationError(f"TOOL section is not valid YAML: {exc}") from exc
    if not isinstance(meta, dict) or "name" not in meta or "category" not in meta:
        raise ValidationError("TOOL section must define at least name and category")
    try:
        category = ToolCategory(meta["category"])
    except ValueError as exc:
        raise ValidationError(f"unknown category {meta['category']!r}") from exc

    tests: list[ToolTestCase] = []
    if sections.get("TESTS"):
        try:
            raw_tests = yaml.safe_load(sections["TESTS"]) or []
        except yaml.YAMLError as exc:
            raise ValidationError(f"TESTS section is not valid YAML: {exc}") from exc
        for entry in raw_tests:
            if not isinstance(entry, dict) or "input" not in entry or "expect" not in entry:
                raise ValidationError("each test needs input and expect mappings")
            tests.append(ToolTestCase(entry["input"], entry["expect"]))

    script = sections.get("SCRIPT", "").strip("\n")
    kind = InvocationKind(meta.get("kind", "local_script" if script else "builtin"))
    manifest = ToolManifest(
        name=str(meta["name"]),
        category=category,
        description=str(meta.get("description", "")),
        input_schema={str(k): str(v) for k, v in (meta.get("inputs") or {}).items()},
        output_schema={str(k): str(v) for k, v in (meta.get("outputs") or {}).items()},
        invocation=InvocationSpec(
            kind=kind,
            target=str(meta.get("target", "")),
            timeout=float(meta.get("timeout", 10.0)),
        ),
        test_cases=tests,
        script_source=script or None,
    )
    manifest.validate_schema()
    return manifest


def seed_default_tools(registry: ToolRegistry, endpoint_base: str = "http://localhost:9790") -> list[str]:
    """Install the predefined manifests: literature/variant/structure queries
    plus foundation-model interfaces. All are http_query stubs pointed at a
    configurable endpoint; they arrive pre-validated so sessions can use them
    immediately, mirroring a starter kit that later grows at inference time.
    """
    specs = [
        ("pubmed_search", ToolCategory.DATABASE_QUERY, "Search biomedical literature abstracts by keyword query", {"query": "str"}, {"results": "list"}),
        ("clinvar_lookup", ToolCategory.DATABASE_QUERY, "Look up clinical significance of a genetic variant", {"variant": "str"}, {"significance": "str"}),
        ("pdb_fetch", ToolCategory.DATABASE_QUERY, "Fetch a protein structure summary by PDB identifier", {"pdb_id": "str"}, {"structure": "str"}),
        ("protein_structure_predictor", ToolCategory.FOUNDATION_MODEL, "Predict protein structure from an amino acid sequence", {"sequence": "str"}, {"prediction": "str"}),
        ("single_cell_annotator", ToolCategory.FOUNDATION_MODEL, "Annotate single-cell expression profiles with cell types", {"profile": "str"}, {"annotation": "str"}),
        ("sequence_embedder", ToolCategory.FOUNDATION_MODEL, "Embed biological sequences for similarity search", {"sequence": "str"}, {"embedding": "list"}),
    ]
    ids = []
    for name, category, description, inputs, outputs in specs:
        manifest = ToolManifest(
            name=name,
            category=category,
            description=description,
            input_schema=inputs,
            output_schema=outputs,
            invocation=InvocationSpec(kind=InvocationKind.HTTP_QUERY, target=f"{endpoint_base}/{name}"),
            test_cases=[ToolTestCase(
                {k: "probe" for k in inputs},
                {"field": next(iter(outputs)), "op": "nonempty"},
            )],
            status=ToolStatus.VALIDATED,
            provenance="predefined",
        )
        ids.append(registry.register(manifest))
    return ids


def audit_gating(store_root: str | Path) -> list[str]:
    """Scan every event stream under an event-store root and report gating
    violations: any tool_invoked event whose recorded status isn't validated.
    Returns violation descriptions; empty list means the gate held everywhere.
    """
    root = Path(store_root)
    violations = []
    for path in sorted(root.glob("*.jsonl")):
        for lineno, line in enumerate(path.read_text("utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError:
                violations.append(f"{path.name}:{lineno}: unreadable event record")
                continue
            if record.get("kind") != "tool_invoked":
                continue
            status = (record.get("payload") or {}).get("status")
            if status != ToolStatus.VALIDATED.value:
                violations.append(
                    f"{path.name}:{lineno}: tool_invoked with status={status!r}"
                )
    return violations


def _split_sections(text: str, headers: tuple[str, ...]) -> dict[str, str]:
    sections: dict[str, str] = {}
    current: str | None = None
    buffer: list[str] = []
    for line in text.splitlines():
        stripped = line.strip()
        if stripped in headers:
            if current is not None:
                sections[current] = "\n".join(buffer)
            current = stripped
            buffer = []
        elif current is not None:
            buffer.append(line)
    if current is not None:
        sections[current] = "\n".join(buffer)
    return sections
