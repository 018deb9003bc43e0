/**
 * Pure view-model builders and the one piece of client-side computation the
 * studio is allowed: re-ranking an already-fetched grounding bundle.
 */

import type {
  BundleDoc,
  BundleStatementDoc,
  NodeDoc,
  StatsDoc,
  TreeDoc,
} from "./api.js";

export type PolicyKind = "depth_rank" | "accuracy_rank" | "usability_rank";

export const POLICIES: PolicyKind[] = ["depth_rank", "accuracy_rank", "usability_rank"];

export function accuracy(stats: StatsDoc): number | null {
  const decided = stats.r_e + stats.r_c;
  return decided > 0 ? stats.r_e / decided : null;
}

export function usability(stats: StatsDoc): number | null {
  const total = stats.r_e + stats.r_n + stats.r_c;
  return total > 0 ? stats.r_e / total : null;
}

export function formatRatio(value: number | null): string {
  return value === null ? "–" : value.toFixed(2);
}

export interface StatementView {
  text: string;
  kind: string;
  abolished: boolean;
  counts: string;
  accuracy: string;
  usability: string;
}

export interface AbolishedEntry {
  node: number;
  question: string;
  statement: string;
  reason: string;
}

export interface NodeView {
  id: number;
  depth: number;
  questionPath: string[];
  edgeQuestion: string | null;
  isLeaf: boolean;
  statements: StatementView[];
  abolished: StatementView[];
  childEdges: { question: string; child: number }[];
}

function statementView(text: string, kind: string, status: string, stats: StatsDoc): StatementView {
  return {
    text,
    kind,
    abolished: status === "abolished",
    counts: `${stats.r_e}/${stats.r_n}/${stats.r_c}`,
    accuracy: formatRatio(accuracy(stats)),
    usability: formatRatio(usability(stats)),
  };
}

/**
 * Pre-order list of render-ready nodes. The abolished overlay (greyed
 * statements from the induction log) attaches at each statement's logged
 * node and is carried separately so the toggle is a pure render concern.
 */
export function buildTreeView(tree: TreeDoc, abolishedLog: AbolishedEntry[] = []): NodeView[] {
  const byId = new Map<number, NodeDoc>(tree.nodes.map((n) => [n.id, n]));
  const edgeQuestionOf = new Map<number, string>();
  for (const node of tree.nodes) {
    for (const edge of node.children) edgeQuestionOf.set(edge.child, edge.question);
  }
  const abolishedByNode = new Map<number, AbolishedEntry[]>();
  for (const entry of abolishedLog) {
    const bucket = abolishedByNode.get(entry.node) ?? [];
    bucket.push(entry);
    abolishedByNode.set(entry.node, bucket);
  }

  const out: NodeView[] = [];
  const visit = (id: number): void => {
    const node = byId.get(id);
    if (!node) return;
    out.push({
      id: node.id,
      depth: node.depth,
      questionPath: node.question_path,
      edgeQuestion: edgeQuestionOf.get(node.id) ?? null,
      isLeaf: node.is_leaf,
      statements: node.statements.map((s) => statementView(s.text, s.kind, s.status, s.stats)),
      abolished: (abolishedByNode.get(node.id) ?? []).map((entry) =>
        statementView(entry.statement, "conditional", "abolished", { r_e: 0, r_n: 0, r_c: 0 }),
      ),
      childEdges: node.children.map((c) => ({ question: c.question, child: c.child })),
    });
    for (const edge of node.children) visit(edge.child);
  };
  visit(tree.root);
  return out;
}

/**
 * Mirror of the service's top-k selection so policy/k switches re-rank the
 * already-fetched bundle without another traversal. Sorting is stable, so
 * ties keep traversal order, and undefined ratios sort last.
 */
export function rankStatements(
  bundle: BundleDoc,
  policy: PolicyKind,
  k: number,
): BundleStatementDoc[] {
  const keyed = bundle.statements.map((statement, index) => ({ statement, index }));
  const metric = (s: BundleStatementDoc): number | null =>
    policy === "accuracy_rank" ? accuracy(s.stats) : usability(s.stats);
  keyed.sort((a, b) => {
    if (policy === "depth_rank") {
      if (b.statement.depth !== a.statement.depth) return b.statement.depth - a.statement.depth;
      return a.index - b.index;
    }
    const ma = metric(a.statement);
    const mb = metric(b.statement);
    if (ma === null && mb === null) return a.index - b.index;
    if (ma === null) return 1;
    if (mb === null) return -1;
    if (mb !== ma) return mb - ma;
    return a.index - b.index;
  });
  return keyed.slice(0, Math.max(1, k)).map((entry) => entry.statement);
}

export interface HighlightState {
  visited: Set<number>;
  trueEdges: Set<string>;
  checkedEdges: Map<string, string>;
  dimmed: Set<number>;
}

export const edgeKey = (parent: number, child: number): string => `${parent}->${child}`;

/** Which nodes/edges light up (and which dim) for a probe result. */
export function highlightFor(tree: TreeDoc, bundle: BundleDoc): HighlightState {
  const visited = new Set(bundle.visited);
  const trueEdges = new Set<string>();
  const checkedEdges = new Map<string, string>();
  for (const edge of bundle.fired_edges) {
    const key = edgeKey(edge.parent, edge.child);
    checkedEdges.set(key, edge.verdict);
    if (edge.verdict === "True") trueEdges.add(key);
  }
  const dimmed = new Set<number>();
  for (const node of tree.nodes) {
    if (!visited.has(node.id)) dimmed.add(node.id);
  }
  return { visited, trueEdges, checkedEdges, dimmed };
}
