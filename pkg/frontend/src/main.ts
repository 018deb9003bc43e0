/**
 * Studio shell: left tree canvas, right inspector, bottom probe console.
 *
 * Flow: load a tree -> probe what-if scenes -> inspect fired edges and the
 * ranked grounding -> edit a rule -> the last probe re-runs automatically so
 * the edit's effect is immediately visible. Edits carry the loaded revision;
 * a 409 shows a reload banner instead of silently overwriting.
 */

import {
  ConflictError,
  StudioApi,
  type BundleDoc,
  type EditCommand,
  type TreeDoc,
} from "./api.js";
import {
  buildTreeView,
  edgeKey,
  highlightFor,
  rankStatements,
  type AbolishedEntry,
  type NodeView,
  type PolicyKind,
} from "./model.js";
import { ProbeSession } from "./probe.js";

const $ = <T extends HTMLElement>(selector: string): T => {
  const el = document.querySelector<T>(selector);
  if (!el) throw new Error(`missing element ${selector}`);
  return el;
};

interface StudioState {
  api: StudioApi;
  treeId: string | null;
  tree: TreeDoc | null;
  bundle: BundleDoc | null;
  abolished: AbolishedEntry[];
  showAbolished: boolean;
  selectedNode: number | null;
  probes: ProbeSession;
}

const state: StudioState = {
  api: new StudioApi(""),
  treeId: null,
  tree: null,
  bundle: null,
  abolished: [],
  showAbolished: false,
  selectedNode: null,
  probes: new ProbeSession(),
};

function setBanner(text: string, kind: "info" | "error" | "conflict" = "info"): void {
  const banner = $("#banner");
  banner.textContent = text;
  banner.dataset.kind = text ? kind : "";
}

function renderStatements(view: NodeView, container: HTMLElement): void {
  const list = document.createElement("ul");
  list.className = "statements";
  const rows = state.showAbolished ? [...view.statements, ...view.abolished] : view.statements;
  for (const statement of rows) {
    const item = document.createElement("li");
    item.className = statement.abolished ? "statement abolished" : "statement";
    item.innerHTML = `<span class="text"></span>
      <span class="badge counts" title="entailed/neutral/contradicted">${statement.counts}</span>
      <span class="badge" title="accuracy">acc ${statement.accuracy}</span>
      <span class="badge" title="usability">use ${statement.usability}</span>`;
    (item.querySelector(".text") as HTMLElement).textContent = statement.text;
    list.appendChild(item);
  }
  container.appendChild(list);
}

function renderTree(): void {
  const canvas = $("#tree-canvas");
  canvas.textContent = "";
  if (!state.tree) {
    canvas.innerHTML = `<p class="empty">No tree loaded. <button id="retry">Retry</button></p>`;
    canvas.querySelector("#retry")?.addEventListener("click", () => void loadTree());
    return;
  }
  const highlight = state.bundle ? highlightFor(state.tree, state.bundle) : null;
  const views = buildTreeView(state.tree, state.showAbolished ? state.abolished : []);
  for (const view of views) {
    const card = document.createElement("div");
    card.className = "node";
    card.dataset.nodeId = String(view.id);
    card.style.marginLeft = `${view.depth * 24}px`;
    if (highlight?.dimmed.has(view.id)) card.classList.add("dimmed");
    if (highlight?.visited.has(view.id)) card.classList.add("visited");
    if (state.selectedNode === view.id) card.classList.add("selected");

    const header = document.createElement("div");
    header.className = "node-header";
    const edge = view.edgeQuestion ? `⟨${view.edgeQuestion}⟩ ` : "";
    header.textContent = `${edge}#${view.id}${view.isLeaf ? " (leaf)" : ""}`;
    card.appendChild(header);
    renderStatements(view, card);

    card.addEventListener("click", (event) => {
      event.stopPropagation();
      state.selectedNode = view.id;
      renderTree();
      renderInspector();
    });
    canvas.appendChild(card);
  }
}

function renderInspector(): void {
  const inspector = $("#inspector-body");
  inspector.textContent = "";
  if (!state.tree || state.selectedNode === null) {
    inspector.innerHTML = `<p class="empty">Select a node to edit its rules.</p>`;
    return;
  }
  const node = state.tree.nodes.find((n) => n.id === state.selectedNode);
  if (!node) return;

  const title = document.createElement("h3");
  title.textContent = `Node #${node.id} · depth ${node.depth}`;
  inspector.appendChild(title);
  if (node.question_path.length) {
    const path = document.createElement("p");
    path.className = "path";
    path.textContent = node.question_path.join(" AND ");
    inspector.appendChild(path);
  }

  node.statements.forEach((statement, index) => {
    const row = document.createElement("div");
    row.className = "edit-row";
    const input = document.createElement("input");
    input.value = statement.text;
    const save = document.createElement("button");
    save.textContent = "Save";
    save.addEventListener("click", () =>
      void applyEdit(node.id, { op: "update_statement", index, text: input.value }),
    );
    const detach = document.createElement("button");
    detach.textContent = "Detach";
    detach.addEventListener("click", () =>
      void applyEdit(node.id, { op: "detach_statement", index }),
    );
    row.append(input, save, detach);
    inspector.appendChild(row);
  });

  const addRow = document.createElement("div");
  addRow.className = "edit-row";
  const questionInput = document.createElement("input");
  questionInput.placeholder = "new child question?";
  const addButton = document.createElement("button");
  addButton.textContent = "Add child";
  addButton.addEventListener("click", () =>
    void applyEdit(node.id, { op: "add_child", question: questionInput.value }),
  );
  addRow.append(questionInput, addButton);
  inspector.appendChild(addRow);

  if (node.id !== state.tree.root) {
    const remove = document.createElement("button");
    remove.className = "danger";
    remove.textContent = "Delete subtree";
    remove.addEventListener("click", () => void applyEdit(node.id, { op: "delete_node" }));
    inspector.appendChild(remove);
  }
}

function renderGrounding(): void {
  const output = $("#grounding");
  output.textContent = "";
  if (!state.bundle) return;
  const policy = ($("#policy") as HTMLSelectElement).value as PolicyKind;
  const k = Number(($("#topk") as HTMLInputElement).value) || 10;
  const ranked = rankStatements(state.bundle, policy, k);
  const list = document.createElement("ol");
  for (const statement of ranked) {
    const item = document.createElement("li");
    item.textContent = `${statement.text} (${statement.stats.r_e}/${statement.stats.r_n}/${statement.stats.r_c})`;
    list.appendChild(item);
  }
  output.appendChild(list);
}

function renderHistory(): void {
  const history = $("#history");
  history.textContent = "";
  for (const entry of [...state.probes.list()].reverse()) {
    const item = document.createElement("li");
    const label = entry.scene.length > 60 ? `${entry.scene.slice(0, 57)}...` : entry.scene;
    item.textContent = `rev ${entry.revision} · ${label} · ${entry.bundle.visited.length} nodes`;
    item.addEventListener("click", () => {
      ($("#scene") as HTMLTextAreaElement).value = entry.scene;
      state.bundle = entry.bundle;
      renderTree();
      renderGrounding();
    });
    history.appendChild(item);
  }
}

async function loadTree(): Promise<void> {
  if (!state.treeId) return;
  try {
    state.tree = await state.api.getTree(state.treeId);
    state.abolished = (await state.api.abolishedLog(state.treeId)) as unknown as AbolishedEntry[];
    setBanner(`Loaded ${state.treeId} (revision ${state.tree.revision})`);
  } catch (error) {
    state.tree = null;
    setBanner(`Could not load tree: ${(error as Error).message}`, "error");
  }
  renderTree();
  renderInspector();
}

async function runProbe(): Promise<void> {
  const sceneBox = $("#scene") as HTMLTextAreaElement;
  const scene = sceneBox.value.trim();
  if (!state.treeId || !state.tree || !scene) return;
  try {
    const bundle = await state.api.traverse(state.treeId, scene);
    state.bundle = bundle;
    state.probes.add(scene, bundle, state.tree.revision);
    setBanner("");
    renderTree();
    renderGrounding();
    renderHistory();
  } catch (error) {
    // keep the previous highlight on failure
    setBanner(`Probe failed: ${(error as Error).message}`, "error");
  }
}

async function applyEdit(nodeId: number, command: EditCommand): Promise<void> {
  if (!state.treeId || !state.tree) return;
  try {
    const result = await state.api.editNode(state.treeId, nodeId, state.tree.revision, command);
    state.tree = result.tree;
    setBanner(`Saved (revision ${result.revision})`);
    renderTree();
    renderInspector();
    if (state.probes.last()) {
      await runProbe();
    }
  } catch (error) {
    if (error instanceof ConflictError) {
      setBanner(
        `Edit conflicts with a newer revision — reload to continue. (${error.message})`,
        "conflict",
      );
    } else {
      setBanner(`Edit rejected: ${(error as Error).message}`, "error");
    }
  }
}

function wireControls(): void {
  $("#load").addEventListener("click", () => {
    state.treeId = ($("#tree-id") as HTMLInputElement).value.trim();
    state.bundle = null;
    state.probes.clear();
    void loadTree();
  });
  const sceneBox = $("#scene") as HTMLTextAreaElement;
  const probeButton = $("#probe") as HTMLButtonElement;
  sceneBox.addEventListener("input", () => {
    probeButton.disabled = sceneBox.value.trim().length === 0;
  });
  probeButton.disabled = true;
  probeButton.addEventListener("click", () => void runProbe());
  $("#policy").addEventListener("change", renderGrounding);
  $("#topk").addEventListener("change", renderGrounding);
  $("#show-abolished").addEventListener("change", (event) => {
    state.showAbolished = (event.target as HTMLInputElement).checked;
    renderTree();
  });
  $("#reload").addEventListener("click", () => void loadTree());
}

export function boot(baseUrl = ""): void {
  state.api = new StudioApi(baseUrl);
  wireControls();
  void state.api
    .health()
    .then((health) => {
      if (health.trees.length) {
        ($("#tree-id") as HTMLInputElement).value = health.trees[0];
        state.treeId = health.trees[0];
        void loadTree();
      }
    })
    .catch(() => setBanner("Service unreachable", "error"));
}

if (typeof document !== "undefined" && document.getElementById("tree-canvas")) {
  boot();
}
