from rest_framework import serializers

ACTIONS = [
    "create_address", "create_dmail_address", "send", "dmail", "scan", "rotate", "retire",
    "open_channel", "publish", "follow", "poll", "offline", "online", "lookup", "assert",
]

# fields an action cannot run without
REQUIRED = {
    "create_address": ["actor", "node"],
    "create_dmail_address": ["actor", "node"],
    "send": ["actor", "to"],
    "dmail": ["actor", "to"],
    "scan": ["actor"],
    "rotate": ["actor"],
    "retire": ["actor"],
    "open_channel": ["actor"],
    "publish": ["actor"],
    "follow": ["actor", "channel"],
    "poll": ["actor"],
    "offline": ["node"],
    "online": ["node"],
    "lookup": ["samples"],
    "assert": [],
}


class ScheduleEntryField(serializers.ListField):
    child = serializers.JSONField()

    def to_internal_value(self, data):
        entry = super().to_internal_value(data)
        if len(entry) != 3 or entry[1] not in ("offline", "online"):
            raise serializers.ValidationError('Expected [time_ms, "offline"|"online", node].')
        try:
            return (float(entry[0]), entry[1], int(entry[2]))
        except (TypeError, ValueError):
            raise serializers.ValidationError("Schedule time and node must be numbers.")


class SimConfigSerializer(serializers.Serializer):
    node_count = serializers.IntegerField(min_value=1, required=False)
    seed = serializers.IntegerField(min_value=0, max_value=(1 << 64) - 1, required=False)
    latency_ms = serializers.ListField(child=serializers.FloatField(min_value=0), min_length=1, max_length=2,
                                       required=False)
    drop_rate = serializers.FloatField(min_value=0, max_value=1, required=False)
    k = serializers.IntegerField(min_value=1, required=False)
    alpha = serializers.IntegerField(min_value=1, required=False)
    replication = serializers.IntegerField(min_value=1, required=False)
    floor = serializers.IntegerField(min_value=0, max_value=512, required=False)
    max_block_size = serializers.IntegerField(min_value=1, required=False)
    rpc_timeout_ms = serializers.FloatField(min_value=0.001, required=False)
    event_budget = serializers.IntegerField(min_value=1, required=False)
    schedule = serializers.ListField(child=ScheduleEntryField(), required=False)

    def validate_latency_ms(self, value):
        if len(value) == 1:
            value = [value[0], value[0]]
        if value[1] < value[0]:
            raise serializers.ValidationError("Latency range must be [low, high] with low <= high.")
        return tuple(value)


class AttemptsCheckSerializer(serializers.Serializer):
    kind = serializers.CharField()
    equals = serializers.IntegerField(min_value=0)


class ActionSerializer(serializers.Serializer):
    action = serializers.ChoiceField(choices=ACTIONS)
    actor = serializers.CharField(required=False)
    node = serializers.IntegerField(min_value=0, required=False)
    to = serializers.CharField(required=False)
    channel = serializers.CharField(required=False)
    text = serializers.CharField(required=False, trim_whitespace=False)
    size = serializers.IntegerField(min_value=1, required=False)
    difficulty = serializers.IntegerField(min_value=1, max_value=512, required=False)
    priority = serializers.IntegerField(min_value=0, default=0)
    limit = serializers.IntegerField(min_value=1, default=20)
    samples = serializers.IntegerField(min_value=1, required=False)
    # send using the site fetched by the actor's previous send to the same receiver
    stale = serializers.BooleanField(default=False)
    received = serializers.ListField(child=serializers.CharField(trim_whitespace=False), required=False)
    received_count = serializers.IntegerField(min_value=0, required=False)
    contains = serializers.CharField(required=False, trim_whitespace=False)
    attempts = AttemptsCheckSerializer(required=False)

    def validate(self, attrs):
        missing = [name for name in REQUIRED[attrs["action"]] if name not in attrs]
        if missing:
            raise serializers.ValidationError(f"{attrs['action']} needs {', '.join(missing)}.")
        if attrs["action"] in ("send", "dmail", "publish") and "text" not in attrs and "size" not in attrs:
            raise serializers.ValidationError(f"{attrs['action']} needs text or size.")
        return attrs


class ScenarioSerializer(serializers.Serializer):
    config = SimConfigSerializer(default=dict)
    actions = ActionSerializer(many=True)
