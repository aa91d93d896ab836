#pragma once

#include <array>
#include <span>
#include <string_view>

namespace docforge::detail {

struct WordPool {
    std::string_view lang;
    bool spaced;  // words separated by spaces
    std::span<const std::string_view> words;
};

inline constexpr std::string_view kWordsEn[] = {
    "the", "model", "data", "layout", "table", "result", "method", "value", "system", "page",
    "document", "analysis", "report", "section", "figure", "summary", "sample", "average", "total", "growth",
    "revenue", "market", "period", "annual", "increase", "decrease", "accuracy", "training", "evaluation", "baseline",
    "structure", "element", "reading", "order", "column", "row", "measure", "estimate", "source", "region",
    "quarter", "policy", "network", "signal", "energy", "volume", "index", "score", "ratio", "level"};

inline constexpr std::string_view kWordsDe[] = {
    "die", "Daten", "Tabelle", "Ergebnis", "Methode", "Wert", "System", "Seite", "Bericht", "Abschnitt",
    "Analyse", "Umsatz", "Markt", "Zeitraum", "Anstieg", "Rückgang", "Genauigkeit", "Struktur", "Spalte", "Zeile",
    "Quelle", "Region", "Quartal", "Netz", "Energie", "Menge", "Größe", "Übersicht", "jährlich", "gesamt",
    "Mittelwert", "Prüfung", "Auswertung", "Dokument", "Element", "Ordnung", "Stufe", "Anteil", "Preis", "Kosten"};

inline constexpr std::string_view kWordsFr[] = {
    "les", "données", "tableau", "résultat", "méthode", "valeur", "système", "page", "rapport", "section",
    "analyse", "marché", "période", "annuel", "hausse", "baisse", "précision", "structure", "colonne", "ligne",
    "source", "région", "trimestre", "réseau", "énergie", "volume", "indice", "score", "ratio", "niveau",
    "moyenne", "évaluation", "document", "élément", "ordre", "lecture", "coût", "prix", "total", "être"};

inline constexpr std::string_view kWordsEs[] = {
    "los", "datos", "tabla", "resultado", "método", "valor", "sistema", "página", "informe", "sección",
    "análisis", "mercado", "período", "anual", "aumento", "descenso", "precisión", "estructura", "columna", "fila",
    "fuente", "región", "trimestre", "red", "energía", "volumen", "índice", "puntuación", "razón", "nivel",
    "promedio", "evaluación", "documento", "elemento", "orden", "lectura", "costo", "precio", "total", "año"};

inline constexpr std::string_view kWordsIt[] = {
    "i", "dati", "tabella", "risultato", "metodo", "valore", "sistema", "pagina", "rapporto", "sezione",
    "analisi", "mercato", "periodo", "annuale", "aumento", "calo", "precisione", "struttura", "colonna", "riga",
    "fonte", "regione", "trimestre", "rete", "energia", "volume", "indice", "punteggio", "rapporto", "livello",
    "media", "valutazione", "documento", "elemento", "ordine", "lettura", "costo", "prezzo", "totale", "città"};

inline constexpr std::string_view kWordsPt[] = {
    "os", "dados", "tabela", "resultado", "método", "valor", "sistema", "página", "relatório", "seção",
    "análise", "mercado", "período", "anual", "aumento", "queda", "precisão", "estrutura", "coluna", "linha",
    "fonte", "região", "trimestre", "rede", "energia", "volume", "índice", "pontuação", "razão", "nível",
    "média", "avaliação", "documento", "elemento", "ordem", "leitura", "custo", "preço", "total", "ação"};

inline constexpr std::string_view kWordsZh[] = {
    "数据", "表格", "结果", "方法", "数值", "系统", "页面", "报告", "章节", "分析",
    "市场", "时期", "年度", "增长", "下降", "精度", "结构", "列", "行", "来源",
    "区域", "季度", "网络", "能源", "总量", "指数", "得分", "比例", "水平", "平均",
    "评估", "文档", "元素", "顺序", "阅读", "成本", "价格", "合计", "模型", "训练"};

inline constexpr std::string_view kWordsJa[] = {
    "データ", "表", "結果", "方法", "値", "システム", "ページ", "報告", "節", "分析",
    "市場", "期間", "年間", "増加", "減少", "精度", "構造", "列", "行", "出典",
    "地域", "四半期", "網", "エネルギー", "総量", "指数", "得点", "比率", "水準", "平均",
    "評価", "文書", "要素", "順序", "読み", "費用", "価格", "合計", "モデル", "学習"};

inline constexpr std::array<WordPool, 8> kWordPools = {{
    {"en", true, kWordsEn},
    {"zh", false, kWordsZh},
    {"de", true, kWordsDe},
    {"fr", true, kWordsFr},
    {"es", true, kWordsEs},
    {"it", true, kWordsIt},
    {"ja", false, kWordsJa},
    {"pt", true, kWordsPt},
}};

inline const WordPool* find_pool(std::string_view lang) {
    for (const auto& p : kWordPools)
        if (p.lang == lang) return &p;
    return nullptr;
}

}  // namespace docforge::detail
